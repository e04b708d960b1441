#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "xray/common.hpp"
#include "xray/expr.hpp"

namespace xray {

enum class SurfaceKind { euclidean_disc, poincare_disc, scaled_hyperbolic, custom };

std::string kind_name(SurfaceKind k);
SurfaceKind parse_kind(const std::string& s);

// Disc-type domain {|x| <= radius} with metric e^{2 lambda} |dx|^2.
class ConformalSurface {
public:
    // margin < 0 selects the default collar of 20% of the radius.
    static ConformalSurface euclidean(double radius, double margin = -1);
    static ConformalSurface poincare(double radius, double margin = -1);
    static ConformalSurface scaled_hyperbolic(double kappa, double radius, double margin = -1);
    // lambda given as an expression in x1, x2. When negatively_curved is set,
    // require_negative_curvature must succeed before Carleman checks accept it.
    static ConformalSurface custom(const std::string& lambda_expr, double radius, double margin = -1,
                                   bool negatively_curved = false);

    SurfaceKind kind() const { return kind_; }
    double radius() const { return radius_; }
    double margin() const { return margin_; }
    double kappa() const { return kappa_; }
    bool negatively_curved_flag() const { return neg_flag_; }
    const std::string& lambda_expr() const { return expr_text_; }

    // lambda with gradient and Hessian. Points beyond eval_radius() are clamped
    // radially; values there only ever meet fields that vanish.
    Jet lambda(double x1, double x2) const;
    double curvature(double x1, double x2) const;  // DomainError outside disc+collar
    double curvature_unchecked(double x1, double x2) const;
    bool constant_curvature() const { return kind_ != SurfaceKind::custom; }

    double defining(double x1, double x2) const { return radius_ * radius_ - x1 * x1 - x2 * x2; }
    bool contains(double x1, double x2, double extra = 0) const;
    // Largest radius where lambda is evaluated without clamping.
    double eval_radius() const;
    // Radius of the engulfing disc used by extension constructions.
    double extended_radius() const;

    std::string describe() const;  // canonical text, used for hashing
    std::uint64_t hash() const { return fnv1a(describe()); }

private:
    SurfaceKind kind_ = SurfaceKind::euclidean_disc;
    double radius_ = 1, margin_ = 0.2, kappa_ = 1;
    bool neg_flag_ = false;
    std::string expr_text_;
    std::shared_ptr<const Expr> expr_;
};

struct CurvatureCertificate {
    bool ok = false;
    double max_K = 0;  // over the sampled grid inside the disc
    double min_K = 0;
    int samples = 0;
};
// Samples K on an n x n grid over the closed disc.
CurvatureCertificate certify_curvature(const ConformalSurface& s, int n = 201);
// For scaled_hyperbolic(kappa): max K + kappa <= 1e-10. For a flagged custom
// surface: max K < 0. Throws ConfigError if the certificate fails.
void require_negative_curvature(const ConformalSurface& s, double kappa);

struct SMPoint {
    double x1 = 0, x2 = 0, theta = 0;
};

struct FlowOptions {
    double h = 0.01;
    int bisection_steps = 12;
    double max_length = 100;
};

struct TraceSample {
    double t;
    SMPoint p;
};

struct GeodesicTrace {
    std::vector<TraceSample> samples;
    double exit_time = 0;
    bool exited = false;
    bool error = false;
    std::string message;
};

// theta' and x' of the unit-speed geodesic flow.
SMPoint flow_rhs(const ConformalSurface& s, const SMPoint& p);
SMPoint rk4_step(const ConformalSurface& s, const SMPoint& p, double h);

// Integrates from start for |t_max| (t_max < 0 flows backwards), stopping at
// the boundary of the disc of radius bradius (0 = surface radius).
GeodesicTrace geodesic_flow(const ConformalSurface& s, const SMPoint& start, double t_max,
                            const FlowOptions& opt = {}, double bradius = 0);

// First time the forward geodesic leaves the disc of radius bradius.
double exit_time(const ConformalSurface& s, const SMPoint& start, const FlowOptions& opt = {},
                 double bradius = 0);

// Fixed-step samples along the full forward ray: step = tau/ceil(tau/h),
// points at every half step, so pts.size() == 2*nsteps + 1.
struct Ray {
    double length = 0;
    double step = 0;
    int nsteps = 0;
    std::vector<SMPoint> pts;
};
Ray sample_ray(const ConformalSurface& s, const SMPoint& start, double h, double bradius = 0,
               int bisection_steps = 12);
// Same chord sampled from its entry point: reverse of sample_ray(start, theta+pi).
Ray sample_ray_reversed(const ConformalSurface& s, const SMPoint& exit_pt, double h, double bradius = 0);

// Euclidean unit direction of theta scaled to g-unit: e^{-lambda}(cos, sin).
inline std::array<double, 2> unit_velocity(const ConformalSurface& s, const SMPoint& p) {
    double el = std::exp(-s.lambda(p.x1, p.x2).v);
    return {el * std::cos(p.theta), el * std::sin(p.theta)};
}

// Projective maps between the Poincare and Klein discs.
std::array<double, 2> klein_from_poincare(double z1, double z2);
std::array<double, 2> poincare_from_klein(double w1, double w2);

// General Riemannian metric on a planar domain, used for non-conformal
// models (Klein) in the projective-equivalence checks.
struct Sym2 {
    double g11, g12, g22;
    double det() const { return g11 * g22 - g12 * g12; }
    double quad(double v1, double v2) const { return g11 * v1 * v1 + 2 * g12 * v1 * v2 + g22 * v2 * v2; }
};

class PlaneMetric {
public:
    static PlaneMetric conformal(const ConformalSurface& s);
    static PlaneMetric klein();  // Beltrami-Klein metric of curvature -1 on the unit disc

    Sym2 g(double x1, double x2) const;
    // Gamma^k_ij v^i v^j, so geodesics satisfy x'' = -accel.
    std::array<double, 2> christoffel_vv(double x1, double x2, double v1, double v2) const;
    std::string name() const;

private:
    enum class Kind { conformal, klein } kind_ = Kind::klein;
    std::optional<ConformalSurface> surf_;
};

// State (x1, x2, v1, v2) with v the coordinate velocity.
using MState = std::array<double, 4>;
MState metric_rk4_step(const PlaneMetric& g, const MState& s, double h);

struct MetricRay {
    double length = 0;
    double step = 0;
    int nsteps = 0;
    std::vector<MState> pts;  // 2*nsteps+1 half-step samples
};
// Forward geodesic of g until it leaves the Euclidean disc of radius bradius.
MetricRay sample_metric_ray(const PlaneMetric& g, const MState& start, double h, double bradius,
                            int bisection_steps = 12);

// H(x,v) = (det g1 / det g2)^{2/3} g2(v,v).
double first_integral_H(const PlaneMetric& g1, const PlaneMetric& g2, double x1, double x2, double v1,
                        double v2);
// Max |H - H(start)| along the g1-geodesic from (x, v), v rescaled to g1-unit.
double first_integral_drift(const PlaneMetric& g1, const PlaneMetric& g2, const MState& start,
                            double bradius, double h = 0.01);

}  // namespace xray
