#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "xray/attenuation.hpp"
#include "xray/sphere_bundle.hpp"
#include "xray/surface.hpp"

namespace xray {

// Samples of a ray in (x1, x2, v1, v2) form, v the coordinate velocity of
// the unit-speed geodesic, at every half step from the start point.
struct RayStates {
    std::vector<MState> pts;
    std::vector<double> theta;
    double step = 0;
    int nsteps = 0;
    double length = 0;
};
RayStates ray_states(const ConformalSurface& s, const Ray& r);
RayStates ray_states(const MetricRay& r);

// n x n matrix M(x, v) (row-major) and source f(x, v) in C^n.
using MatrixFn = std::function<void(const MState&, double theta, cd*)>;
using SourceFn = std::function<void(const MState&, double theta, cd*)>;

// u' + M u = -f along the ray, u = 0 at the far end; returns u at pts[0].
// Classical RK4 with the half-step samples as stage points.
std::vector<cd> integrate_backward(const RayStates& r, int n, const MatrixFn& M, const SourceFn& f);
// Per-sample matrices G_p with u(0) = sum_p G_p f(p); layout p * n * n.
std::vector<cd> ray_kernel(const RayStates& r, int n, const MatrixFn& M);
// U' + M U = 0 from U(0) = Id; returns U at the last sample.
std::vector<cd> fundamental_forward(const RayStates& r, int n, const MatrixFn& M, int first_step = 0,
                                    int last_step = -1);

MatrixFn attenuation_fn(const AttenuationPair& att);

// Evaluates an SMField at arbitrary (x, theta): bicubic in space, exact
// trigonometric interpolation in the fiber. Zero outside the grid square.
class FieldSampler {
public:
    explicit FieldSampler(const SMField& f);
    void eval(double x1, double x2, double theta, cd* out) const;
    int channels() const { return n_; }
    SourceFn as_source() const;

private:
    FourierModes m_;
    int n_;
    std::vector<int> active_;  // slots carrying nonzero coefficients
};

struct FanSpec {
    int n_beta = 180;
    int n_alpha = 60;
    double alpha_margin = 0.05;
    // The alpha grid of fan ib is shifted by ((ib mod interlace) + 0.5) / interlace
    // of a cell; 1 gives the same cell-centred grid at every beta.
    int interlace = 1;

    double beta(int ib) const { return kTwoPi * ib / n_beta; }
    double d_alpha() const { return (kPi - 2 * alpha_margin) / n_alpha; }
    double alpha(int ib, int ia) const {
        double off = (interlace > 1) ? (ib % interlace + 0.5) / interlace : 0.5;
        return -(kPi / 2 - alpha_margin) + (ia + off) * d_alpha();
    }
};

// Data on a boundary fan; each node carries rows x cols complex numbers.
struct BoundaryFan {
    FanSpec spec;
    int rows = 1, cols = 1;
    std::vector<cd> values;
    std::vector<double> cond;  // per-node condition numbers (scattering data)

    BoundaryFan() = default;
    BoundaryFan(const FanSpec& s, int r, int c)
        : spec(s), rows(r), cols(c), values(static_cast<std::size_t>(s.n_beta) * s.n_alpha * r * c) {}
    std::size_t node(int ib, int ia) const { return static_cast<std::size_t>(ib) * spec.n_alpha + ia; }
    std::size_t nodes() const { return static_cast<std::size_t>(spec.n_beta) * spec.n_alpha; }
    cd* at(int ib, int ia) { return &values[node(ib, ia) * rows * cols]; }
    const cd* at(int ib, int ia) const { return &values[node(ib, ia) * rows * cols]; }
};

// Incoming start on the boundary circle: x = r(cos b, sin b), theta = b + pi + a.
SMPoint fan_point_plus(double radius, double beta, double alpha);
// Outgoing point: theta = b + a.
SMPoint fan_point_minus(double radius, double beta, double alpha);
// cos(a) * d_beta * d_alpha * boundary arclength factor r e^{lambda}
double fan_weight(const ConformalSurface& s, const FanSpec& f, int ib, int ia);

struct TransportOptions {
    double h = 0.01;
};

std::vector<cd> solve_transport_ray(const ConformalSurface& s, const AttenuationPair* att, const SMField& f,
                                    const SMPoint& start, const TransportOptions& opt = {});
std::vector<cd> solve_transport_ray(const ConformalSurface& s, const AttenuationPair* att, const FieldSampler& f,
                                    const SMPoint& start, const TransportOptions& opt = {});

BoundaryFan xray_transform(const ConformalSurface& s, const AttenuationPair* att, const SMField& f,
                           const FanSpec& fan, const TransportOptions& opt = {});

// C = U at exit for U' + (A + Phi) U = 0, U = Id at entry, indexed by the
// outgoing fan node.
BoundaryFan scattering_data(const ConformalSurface& s, const AttenuationPair* att, const FanSpec& fan,
                            const TransportOptions& opt = {});
double max_node_distance(const BoundaryFan& a, const BoundaryFan& b);

// n = 1, A = 0: max over the fan of |C - exp(-int phi)| with the integral by
// composite Simpson on a ray sampled at opt.h / 4.
double abelian_scattering_error(const ConformalSurface& s, const AttenuationPair& att, const FanSpec& fan,
                                const TransportOptions& opt = {});

// Prop 7.1 style solve: the disc is embedded in the disc of radius
// s.extended_radius(), the attenuation is cut off smoothly in the collar and
// f is extended by zero; integration starts from the exit of the large disc.
std::vector<cd> solve_transport_extended(const ConformalSurface& s, const AttenuationPair* att, const SMField& f,
                                         const SMPoint& start, const TransportOptions& opt = {});

// u' + M u = -f along the g-geodesic from start (velocity rescaled to g-unit)
// until it leaves the Euclidean disc of radius bradius; u at the start.
std::vector<cd> transport_metric_ray(const PlaneMetric& g, int n, const MatrixFn& M, const SourceFn& f,
                                     const MState& start, double bradius, const TransportOptions& opt = {});

// Projective transfer between the Euclidean and Klein metrics on the disc of
// radius `radius` < 1: I^1_A(f g2(v,v)^{(1-k)/2})(x, v) against
// I^2_A(f)(x, v / sqrt(g2(v,v))) for a random polynomial k-tensor f, and for
// k = 1 also the scattering data C^1_A against C^2_A. Phi of att is ignored.
struct ProjectiveTransfer {
    int k = 1, rays = 0;
    double max_abs = 0, scale = 0, max_rel = 0;  // max |I1 - I2|, max |I2|, ratio
    double scattering_max = 0;                   // max node distance (k = 1 only)
};
ProjectiveTransfer projective_transfer(double radius, const AttenuationPair& att, int k, std::uint64_t seed,
                                       const FanSpec& fan, const TransportOptions& opt = {});

void save_fan_csv(const BoundaryFan& f, const std::string& path);
// Reads save_fan_csv output; the beta/alpha columns must match spec to 1e-9.
BoundaryFan load_fan_csv(const std::string& path, const FanSpec& spec, int rows, int cols = 1);
void save_scattering_json(const BoundaryFan& f, const std::string& path);

}  // namespace xray
