#include "xray/surface.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace xray {

std::string kind_name(SurfaceKind k) {
    switch (k) {
        case SurfaceKind::euclidean_disc: return "euclidean_disc";
        case SurfaceKind::poincare_disc: return "poincare_disc";
        case SurfaceKind::scaled_hyperbolic: return "scaled_hyperbolic";
        case SurfaceKind::custom: return "custom";
    }
    return "?";
}

SurfaceKind parse_kind(const std::string& s) {
    if (s == "euclidean_disc") return SurfaceKind::euclidean_disc;
    if (s == "poincare_disc") return SurfaceKind::poincare_disc;
    if (s == "scaled_hyperbolic") return SurfaceKind::scaled_hyperbolic;
    if (s == "custom") return SurfaceKind::custom;
    throw ConfigError("unknown surface kind '" + s + "'");
}

static void check_radius(double r) {
    if (!(r > 0) || !std::isfinite(r)) throw ConfigError("surface radius must be positive");
}

static double default_margin(double r, double m) {
    if (m < 0) return 0.2 * r;
    return m;
}

ConformalSurface ConformalSurface::euclidean(double radius, double margin) {
    check_radius(radius);
    ConformalSurface s;
    s.kind_ = SurfaceKind::euclidean_disc;
    s.radius_ = radius;
    s.margin_ = default_margin(radius, margin);
    s.kappa_ = 0;
    return s;
}

ConformalSurface ConformalSurface::poincare(double radius, double margin) {
    ConformalSurface s = scaled_hyperbolic(1.0, radius, margin);
    s.kind_ = SurfaceKind::poincare_disc;
    return s;
}

ConformalSurface ConformalSurface::scaled_hyperbolic(double kappa, double radius, double margin) {
    check_radius(radius);
    if (radius >= 1) throw ConfigError("hyperbolic models need radius < 1");
    if (!(kappa > 0)) throw ConfigError("kappa must be positive");
    ConformalSurface s;
    s.kind_ = SurfaceKind::scaled_hyperbolic;
    s.radius_ = radius;
    s.margin_ = default_margin(radius, margin);
    s.kappa_ = kappa;
    return s;
}

ConformalSurface ConformalSurface::custom(const std::string& lambda_expr, double radius, double margin,
                                          bool negatively_curved) {
    check_radius(radius);
    ConformalSurface s;
    s.kind_ = SurfaceKind::custom;
    s.radius_ = radius;
    s.margin_ = default_margin(radius, margin);
    s.kappa_ = 0;
    s.neg_flag_ = negatively_curved;
    s.expr_text_ = lambda_expr;
    s.expr_ = std::make_shared<Expr>(lambda_expr);
    // derivatives come from automatic differentiation; compare against
    // central differences once so a broken expression is caught early
    const double h = 1e-4;
    for (double a : {0.0, 0.3, 0.6}) {
        double x1 = a * radius * std::cos(1.0 + a), x2 = a * radius * std::sin(1.0 + a);
        Jet j = s.expr_->eval(x1, x2);
        double fd1 = (s.expr_->value(x1 + h, x2) - s.expr_->value(x1 - h, x2)) / (2 * h);
        double fd2 = (s.expr_->value(x1, x2 + h) - s.expr_->value(x1, x2 - h)) / (2 * h);
        double fd11 = (s.expr_->value(x1 + h, x2) - 2 * j.v + s.expr_->value(x1 - h, x2)) / (h * h);
        double fd22 = (s.expr_->value(x1, x2 + h) - 2 * j.v + s.expr_->value(x1, x2 - h)) / (h * h);
        double scale = 1 + std::abs(j.v) + std::abs(j.d1) + std::abs(j.d2) + std::abs(j.d11) + std::abs(j.d22);
        double err = std::abs(fd1 - j.d1) + std::abs(fd2 - j.d2) + std::abs(fd11 - j.d11) + std::abs(fd22 - j.d22);
        if (!std::isfinite(j.v) || err > 1e-4 * scale)
            throw ConfigError("custom lambda: derivatives inconsistent with values at (" + std::to_string(x1) + ", " +
                              std::to_string(x2) + ")");
    }
    return s;
}

double ConformalSurface::extended_radius() const {
    double ext = radius_ + margin_;
    if (kind_ != SurfaceKind::euclidean_disc && radius_ < 1) ext = std::min(ext, 0.5 * (1 + radius_));
    return ext;
}

double ConformalSurface::eval_radius() const {
    if (kind_ == SurfaceKind::euclidean_disc) return std::numeric_limits<double>::infinity();
    if (radius_ < 1) return 0.5 * (1 + extended_radius());
    return std::numeric_limits<double>::infinity();
}

bool ConformalSurface::contains(double x1, double x2, double extra) const {
    double R = radius_ + extra;
    return x1 * x1 + x2 * x2 <= R * R * (1 + 1e-12);
}

Jet ConformalSurface::lambda(double x1, double x2) const {
    double rr = std::hypot(x1, x2), re = eval_radius();
    if (rr > re) {
        x1 *= re / rr;
        x2 *= re / rr;
    }
    switch (kind_) {
        case SurfaceKind::euclidean_disc: return Jet{};
        case SurfaceKind::poincare_disc:
        case SurfaceKind::scaled_hyperbolic: {
            double q = 1 - x1 * x1 - x2 * x2;
            Jet j;
            j.v = std::log(2.0) - std::log(q) - 0.5 * std::log(kappa_);
            j.d1 = 2 * x1 / q;
            j.d2 = 2 * x2 / q;
            j.d11 = 2 / q + 4 * x1 * x1 / (q * q);
            j.d12 = 4 * x1 * x2 / (q * q);
            j.d22 = 2 / q + 4 * x2 * x2 / (q * q);
            return j;
        }
        case SurfaceKind::custom: return expr_->eval(x1, x2);
    }
    return Jet{};
}

double ConformalSurface::curvature_unchecked(double x1, double x2) const {
    switch (kind_) {
        case SurfaceKind::euclidean_disc: return 0;
        case SurfaceKind::poincare_disc:
        case SurfaceKind::scaled_hyperbolic: return -kappa_;
        case SurfaceKind::custom: {
            Jet j = lambda(x1, x2);
            return -std::exp(-2 * j.v) * (j.d11 + j.d22);
        }
    }
    return 0;
}

double ConformalSurface::curvature(double x1, double x2) const {
    if (!contains(x1, x2, margin_)) throw DomainError("curvature: point outside domain and collar");
    return curvature_unchecked(x1, x2);
}

std::string ConformalSurface::describe() const {
    std::ostringstream os;
    os.precision(17);
    os << kind_name(kind_) << ";r=" << radius_ << ";margin=" << margin_;
    if (kind_ == SurfaceKind::scaled_hyperbolic) os << ";kappa=" << kappa_;
    if (kind_ == SurfaceKind::custom) os << ";lambda=" << expr_text_ << ";neg=" << neg_flag_;
    return os.str();
}

CurvatureCertificate certify_curvature(const ConformalSurface& s, int n) {
    CurvatureCertificate c;
    c.max_K = -std::numeric_limits<double>::infinity();
    c.min_K = std::numeric_limits<double>::infinity();
    double R = s.radius();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double x1 = -R + 2 * R * i / (n - 1), x2 = -R + 2 * R * j / (n - 1);
            if (x1 * x1 + x2 * x2 > R * R) continue;
            double K = s.curvature_unchecked(x1, x2);
            c.max_K = std::max(c.max_K, K);
            c.min_K = std::min(c.min_K, K);
            ++c.samples;
        }
    c.ok = c.max_K <= 0;
    return c;
}

void require_negative_curvature(const ConformalSurface& s, double kappa) {
    CurvatureCertificate c = certify_curvature(s);
    switch (s.kind()) {
        case SurfaceKind::euclidean_disc:
            throw ConfigError("surface is flat; a negative curvature bound is required");
        case SurfaceKind::poincare_disc:
        case SurfaceKind::scaled_hyperbolic:
            if (c.max_K + s.kappa() > 1e-10 || kappa > s.kappa() * (1 + 1e-12))
                throw ConfigError("curvature certificate failed: need K <= -kappa");
            return;
        case SurfaceKind::custom:
            if (!s.negatively_curved_flag() || !(c.max_K < 0) || c.max_K > -kappa)
                throw ConfigError("curvature certificate failed for custom surface (max K = " +
                                  std::to_string(c.max_K) + ")");
            return;
    }
}

SMPoint flow_rhs(const ConformalSurface& s, const SMPoint& p) {
    Jet l = s.lambda(p.x1, p.x2);
    double el = std::exp(-l.v), c = std::cos(p.theta), sn = std::sin(p.theta);
    return {el * c, el * sn, el * (-l.d1 * sn + l.d2 * c)};
}

SMPoint rk4_step(const ConformalSurface& s, const SMPoint& p, double h) {
    auto add = [](const SMPoint& a, const SMPoint& k, double f) {
        return SMPoint{a.x1 + f * k.x1, a.x2 + f * k.x2, a.theta + f * k.theta};
    };
    SMPoint k1 = flow_rhs(s, p);
    SMPoint k2 = flow_rhs(s, add(p, k1, h / 2));
    SMPoint k3 = flow_rhs(s, add(p, k2, h / 2));
    SMPoint k4 = flow_rhs(s, add(p, k3, h));
    return SMPoint{p.x1 + h / 6 * (k1.x1 + 2 * k2.x1 + 2 * k3.x1 + k4.x1),
                   p.x2 + h / 6 * (k1.x2 + 2 * k2.x2 + 2 * k3.x2 + k4.x2),
                   p.theta + h / 6 * (k1.theta + 2 * k2.theta + 2 * k3.theta + k4.theta)};
}

namespace {

// Exit search shared by the conformal and general-metric integrators.
// step(state, dt) advances by dt >= 0; rho > 0 inside.
template <class S, class Step, class Rho>
double find_exit(const S& s0, Step step, Rho rho, double h, int nbis, double max_len, double R) {
    double tol = 1e-10 * R * R;
    double r0 = rho(s0);
    if (r0 < -tol) throw DomainError("exit_time: start outside the domain");
    if (r0 <= tol) {
        // boundary start: outgoing or tangentially leaving rays exit at once
        if (rho(step(s0, h / 4)) < 0) return 0;
    }
    S s = s0;
    double t = 0;
    while (t < max_len) {
        S s1 = step(s, h);
        if (rho(s1) < 0) {
            double lo = 0, hi = h;
            for (int k = 0; k < nbis; ++k) {
                double mid = 0.5 * (lo + hi);
                if (rho(step(s, mid)) >= 0) lo = mid;
                else hi = mid;
            }
            double rl = rho(step(s, lo)), rh = rho(step(s, hi));
            double ts = (rl - rh) != 0 ? lo + rl * (hi - lo) / (rl - rh) : lo;
            return t + std::clamp(ts, lo, hi);
        }
        s = s1;
        t += h;
    }
    throw GeometryError("exit_time: no boundary crossing within max_length (trapped ray?)");
}

}  // namespace

double exit_time(const ConformalSurface& s, const SMPoint& start, const FlowOptions& opt, double bradius) {
    double R = bradius > 0 ? bradius : s.radius();
    auto rho = [R](const SMPoint& p) { return R * R - p.x1 * p.x1 - p.x2 * p.x2; };
    auto step = [&s](const SMPoint& p, double dt) { return rk4_step(s, p, dt); };
    return find_exit(start, step, rho, opt.h, opt.bisection_steps, opt.max_length, R);
}

GeodesicTrace geodesic_flow(const ConformalSurface& s, const SMPoint& start, double t_max, const FlowOptions& opt,
                            double bradius) {
    GeodesicTrace tr;
    double R = bradius > 0 ? bradius : s.radius();
    double dir = t_max < 0 ? -1.0 : 1.0;
    auto rho = [R](const SMPoint& p) { return R * R - p.x1 * p.x1 - p.x2 * p.x2; };
    auto step = [&s, dir](const SMPoint& p, double dt) { return rk4_step(s, p, dir * dt); };
    double tau;
    try {
        tau = find_exit(start, step, rho, opt.h, opt.bisection_steps, std::max(opt.max_length, std::abs(t_max)), R);
    } catch (const GeometryError& e) {
        tau = std::numeric_limits<double>::infinity();
    }
    double T = std::min(std::abs(t_max), tau);
    tr.exited = tau <= std::abs(t_max);
    tr.exit_time = tau;
    tr.samples.push_back({0.0, start});
    if (T <= 0) return tr;
    int n = std::max(1, static_cast<int>(std::ceil(T / opt.h - 1e-9)));
    double dt = T / n;
    SMPoint p = start;
    for (int k = 1; k <= n; ++k) {
        p = step(p, dt);
        if (!std::isfinite(p.x1) || !std::isfinite(p.theta)) {
            tr.error = true;
            tr.message = "non-finite state (step underflow near boundary?)";
            return tr;
        }
        tr.samples.push_back({k * dt, p});
    }
    return tr;
}

Ray sample_ray(const ConformalSurface& s, const SMPoint& start, double h, double bradius, int bisection_steps) {
    FlowOptions opt;
    opt.h = h;
    opt.bisection_steps = bisection_steps;
    Ray r;
    double tau = exit_time(s, start, opt, bradius);
    r.length = tau;
    r.pts.push_back(start);
    if (tau <= 0) return r;
    r.nsteps = std::max(1, static_cast<int>(std::ceil(tau / h - 1e-9)));
    r.step = tau / r.nsteps;
    r.pts.reserve(2 * r.nsteps + 1);
    SMPoint p = start;
    for (int k = 0; k < 2 * r.nsteps; ++k) {
        p = rk4_step(s, p, r.step / 2);
        r.pts.push_back(p);
    }
    return r;
}

Ray sample_ray_reversed(const ConformalSurface& s, const SMPoint& exit_pt, double h, double bradius) {
    SMPoint back{exit_pt.x1, exit_pt.x2, exit_pt.theta + kPi};
    Ray r = sample_ray(s, back, h, bradius);
    std::reverse(r.pts.begin(), r.pts.end());
    for (auto& p : r.pts) p.theta -= kPi;
    return r;
}

std::array<double, 2> klein_from_poincare(double z1, double z2) {
    double q = 1 + z1 * z1 + z2 * z2;
    return {2 * z1 / q, 2 * z2 / q};
}

std::array<double, 2> poincare_from_klein(double w1, double w2) {
    double ww = w1 * w1 + w2 * w2;
    if (ww >= 1) throw DomainError("poincare_from_klein: point outside unit disc");
    double q = 1 + std::sqrt(1 - ww);
    return {w1 / q, w2 / q};
}

PlaneMetric PlaneMetric::conformal(const ConformalSurface& s) {
    PlaneMetric m;
    m.kind_ = Kind::conformal;
    m.surf_ = s;
    return m;
}

PlaneMetric PlaneMetric::klein() {
    PlaneMetric m;
    m.kind_ = Kind::klein;
    return m;
}

std::string PlaneMetric::name() const {
    return kind_ == Kind::klein ? std::string("klein") : "conformal:" + surf_->describe();
}

Sym2 PlaneMetric::g(double x1, double x2) const {
    if (kind_ == Kind::conformal) {
        double e = std::exp(2 * surf_->lambda(x1, x2).v);
        return {e, 0, e};
    }
    double q = 1 - x1 * x1 - x2 * x2;
    if (q <= 0) throw DomainError("klein metric: point outside unit disc");
    return {1 / q + x1 * x1 / (q * q), x1 * x2 / (q * q), 1 / q + x2 * x2 / (q * q)};
}

std::array<double, 2> PlaneMetric::christoffel_vv(double x1, double x2, double v1, double v2) const {
    if (kind_ == Kind::conformal) {
        Jet l = surf_->lambda(x1, x2);
        double lv = l.d1 * v1 + l.d2 * v2, vv = v1 * v1 + v2 * v2;
        return {2 * v1 * lv - l.d1 * vv, 2 * v2 * lv - l.d2 * vv};
    }
    // projectively flat: Gamma^k_ij = delta^k_i psi_j + delta^k_j psi_i,
    // psi = d log sqrt(det g) / 3 = x / (1 - |x|^2)
    double q = 1 - x1 * x1 - x2 * x2;
    double pv = (x1 * v1 + x2 * v2) / q;
    return {2 * pv * v1, 2 * pv * v2};
}

MState metric_rk4_step(const PlaneMetric& g, const MState& s, double h) {
    auto f = [&g](const MState& y) {
        auto a = g.christoffel_vv(y[0], y[1], y[2], y[3]);
        return MState{y[2], y[3], -a[0], -a[1]};
    };
    auto add = [](const MState& a, const MState& k, double c) {
        return MState{a[0] + c * k[0], a[1] + c * k[1], a[2] + c * k[2], a[3] + c * k[3]};
    };
    MState k1 = f(s), k2 = f(add(s, k1, h / 2)), k3 = f(add(s, k2, h / 2)), k4 = f(add(s, k3, h));
    MState r;
    for (int i = 0; i < 4; ++i) r[i] = s[i] + h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    return r;
}

MetricRay sample_metric_ray(const PlaneMetric& g, const MState& start, double h, double bradius, int bisection_steps) {
    double R = bradius;
    auto rho = [R](const MState& p) { return R * R - p[0] * p[0] - p[1] * p[1]; };
    auto step = [&g](const MState& p, double dt) { return metric_rk4_step(g, p, dt); };
    MetricRay r;
    double tau = find_exit(start, step, rho, h, bisection_steps, 100.0, R);
    r.length = tau;
    r.pts.push_back(start);
    if (tau <= 0) return r;
    r.nsteps = std::max(1, static_cast<int>(std::ceil(tau / h - 1e-9)));
    r.step = tau / r.nsteps;
    MState p = start;
    for (int k = 0; k < 2 * r.nsteps; ++k) {
        p = metric_rk4_step(g, p, r.step / 2);
        r.pts.push_back(p);
    }
    return r;
}

double first_integral_H(const PlaneMetric& g1, const PlaneMetric& g2, double x1, double x2, double v1, double v2) {
    Sym2 a = g1.g(x1, x2), b = g2.g(x1, x2);
    return std::pow(a.det() / b.det(), 2.0 / 3.0) * b.quad(v1, v2);
}

double first_integral_drift(const PlaneMetric& g1, const PlaneMetric& g2, const MState& start, double bradius,
                            double h) {
    MState s = start;
    double n = std::sqrt(g1.g(s[0], s[1]).quad(s[2], s[3]));
    s[2] /= n;
    s[3] /= n;
    MetricRay ray = sample_metric_ray(g1, s, h, bradius);
    double H0 = first_integral_H(g1, g2, s[0], s[1], s[2], s[3]);
    double drift = 0;
    for (const auto& p : ray.pts) drift = std::max(drift, std::abs(first_integral_H(g1, g2, p[0], p[1], p[2], p[3]) - H0));
    return drift;
}

}  // namespace xray
