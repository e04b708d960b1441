#include "xray/riccati.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "xray/identities.hpp"
#include "xray/parallel.hpp"

namespace xray {

namespace {

// Entry point of the chord through p, pulled onto the circle when the
// backward search overshoots it by round-off.
SMPoint chord_entry(const ConformalSurface& s, const SMPoint& p, double h, double R, double& back_len) {
    Ray rb = sample_ray(s, SMPoint{p.x1, p.x2, p.theta + kPi}, h, R);
    back_len = rb.length;
    SMPoint e = rb.pts.back();
    e.theta -= kPi;
    double r = std::hypot(e.x1, e.x2);
    if (r > R) {
        e.x1 *= R / r;
        e.x2 *= R / r;
    }
    return e;
}

// y'' + K y = 0 by RK4 over the chord samples; dir = +1 from the first
// sample, -1 from the last. Returns (y, y') at every full step.
void jacobi_sweep(const std::vector<double>& Kh, int nsteps, double step, int dir, std::vector<double>& y,
                  std::vector<double>& yp) {
    y.assign(nsteps + 1, 0.0);
    yp.assign(nsteps + 1, 0.0);
    int j = dir > 0 ? 0 : nsteps;
    y[j] = 0;
    yp[j] = 1;
    const double h = dir * step;
    for (int q = 0; q < nsteps; ++q) {
        int j1 = j + dir;
        double k0 = Kh[2 * j], km = Kh[2 * j + dir], k1 = Kh[2 * j1];
        double a = y[j], b = yp[j];
        double ya1 = b, pa1 = -k0 * a;
        double ya2 = b + h / 2 * pa1, pa2 = -km * (a + h / 2 * ya1);
        double ya3 = b + h / 2 * pa2, pa3 = -km * (a + h / 2 * ya2);
        double ya4 = b + h * pa3, pa4 = -k1 * (a + h * ya3);
        y[j1] = a + h / 6 * (ya1 + 2 * ya2 + 2 * ya3 + ya4);
        yp[j1] = b + h / 6 * (pa1 + 2 * pa2 + 2 * pa3 + pa4);
        j = j1;
    }
}

struct JState {
    SMPoint p;
    double ya, pa, yb, pb;
};

JState jderiv(const ConformalSurface& s, const JState& z) {
    double K = s.curvature_unchecked(z.p.x1, z.p.x2);
    return JState{flow_rhs(s, z.p), z.pa, -K * z.ya, z.pb, -K * z.yb};
}

JState jadd(const JState& z, const JState& d, double h) {
    return JState{SMPoint{z.p.x1 + h * d.p.x1, z.p.x2 + h * d.p.x2, z.p.theta + h * d.p.theta}, z.ya + h * d.ya,
                  z.pa + h * d.pa, z.yb + h * d.yb, z.pb + h * d.pb};
}

// y_A(S) / y_B(S) for the Jacobi fields with (y, y') = (1, 0) and (0, 1) at
// p, S the exit time of the disc of radius R.
double jacobi_ratio(const ConformalSurface& s, const SMPoint& p, double h, double R) {
    FlowOptions fo;
    fo.h = h;
    double S = exit_time(s, p, fo, R);
    int n = std::max(1, static_cast<int>(std::ceil(S / h)));
    double dt = S / n;
    JState z{p, 1, 0, 0, 1};
    for (int k = 0; k < n; ++k) {
        JState k1 = jderiv(s, z);
        JState k2 = jderiv(s, jadd(z, k1, dt / 2));
        JState k3 = jderiv(s, jadd(z, k2, dt / 2));
        JState k4 = jderiv(s, jadd(z, k3, dt));
        JState d{SMPoint{(k1.p.x1 + 2 * k2.p.x1 + 2 * k3.p.x1 + k4.p.x1) / 6,
                         (k1.p.x2 + 2 * k2.p.x2 + 2 * k3.p.x2 + k4.p.x2) / 6,
                         (k1.p.theta + 2 * k2.p.theta + 2 * k3.p.theta + k4.p.theta) / 6},
                 (k1.ya + 2 * k2.ya + 2 * k3.ya + k4.ya) / 6, (k1.pa + 2 * k2.pa + 2 * k3.pa + k4.pa) / 6,
                 (k1.yb + 2 * k2.yb + 2 * k3.yb + k4.yb) / 6, (k1.pb + 2 * k2.pb + 2 * k3.pb + k4.pb) / 6};
        z = jadd(z, d, dt);
    }
    if (z.yb <= 0) throw GeometryError("not simple on this ray");
    return z.ya / z.yb;
}

}  // namespace

RiccatiTrace riccati_solutions(const ConformalSurface& s, const SMPoint& start, const RiccatiOptions& opt) {
    const double R = opt.bradius > 0 ? opt.bradius : s.radius();
    if (!s.contains(start.x1, start.x2) || s.defining(start.x1, start.x2) <= 0 ||
        std::hypot(start.x1, start.x2) >= R)
        throw DomainError("riccati_solutions: start must be interior");
    CurvatureCertificate cert = certify_curvature(s, 101);
    if (cert.max_K > 0) throw ConfigError("riccati_solutions: positive curvature is refused");

    RiccatiTrace tr;
    double back = 0;
    SMPoint e = chord_entry(s, start, opt.h, R, back);
    Ray ray = sample_ray(s, e, opt.h, R);
    if (ray.length < opt.min_steps * opt.h) ray = sample_ray(s, e, ray.length / opt.min_steps, R);
    const int N = ray.nsteps;
    if (N < 2 * opt.collar_steps + 4) throw GeometryError("riccati_solutions: chord too short for the step");
    tr.t_entry = 0;
    tr.t_exit = ray.length;
    tr.t_start = back;
    tr.step = ray.step;

    std::vector<double> Kh(ray.pts.size());
    for (std::size_t i = 0; i < Kh.size(); ++i) Kh[i] = s.curvature_unchecked(ray.pts[i].x1, ray.pts[i].x2);

    std::vector<double> yf, pf, yb, pb;
    jacobi_sweep(Kh, N, ray.step, +1, yf, pf);
    jacobi_sweep(Kh, N, ray.step, -1, yb, pb);

    tr.t.resize(N + 1);
    tr.u_plus.assign(N + 1, NAN);
    tr.u_minus.assign(N + 1, NAN);
    tr.K.resize(N + 1);
    tr.first = opt.collar_steps;
    tr.last = N - opt.collar_steps;
    tr.geodesic.exit_time = ray.length;
    tr.geodesic.exited = true;
    for (int j = 0; j <= N; ++j) {
        tr.t[j] = j * ray.step;
        tr.K[j] = Kh[2 * j];
        tr.geodesic.samples.push_back({tr.t[j], ray.pts[2 * j]});
        if (j > 0 && j < N && (yf[j] <= 0 || yb[j] >= 0)) throw GeometryError("not simple on this ray");
        if (j >= tr.first && j <= tr.last) {
            tr.u_plus[j] = pf[j] / yf[j];
            tr.u_minus[j] = pb[j] / yb[j];
        }
    }
    return tr;
}

double riccati_residual(const RiccatiTrace& tr) {
    const int N = static_cast<int>(tr.t.size()) - 1;
    const int lo = std::max(tr.first + 2, N / 4), hi = std::min(tr.last - 2, 3 * N / 4);
    const double h = tr.step;
    double worst = 0;
    for (const auto* u : {&tr.u_plus, &tr.u_minus})
        for (int j = lo; j <= hi; ++j) {
            const auto& v = *u;
            double d = (v[j - 2] - 8 * v[j - 1] + 8 * v[j + 1] - v[j + 2]) / (12 * h);
            worst = std::max(worst, std::abs(d + v[j] * v[j] + tr.K[j]));
        }
    return worst;
}

double riccati_closed_form_error(const RiccatiTrace& tr, double kappa) {
    double worst = 0;
    const double L = tr.t_exit, sk = std::sqrt(kappa);
    for (int j = tr.first; j <= tr.last; ++j) {
        double t = tr.t[j], up, um;
        if (kappa == 0) {
            up = 1 / t;
            um = 1 / (t - L);
        } else {
            up = sk / std::tanh(sk * t);
            um = -sk / std::tanh(sk * (L - t));
        }
        worst = std::max({worst, std::abs(tr.u_plus[j] - up), std::abs(tr.u_minus[j] - um)});
    }
    return worst;
}

void save_riccati_csv(const RiccatiTrace& tr, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path);
    os.precision(17);
    os << "t,u_plus,u_minus,K\n";
    for (int j = tr.first; j <= tr.last; ++j)
        os << tr.t[j] << ',' << tr.u_plus[j] << ',' << tr.u_minus[j] << ',' << tr.K[j] << '\n';
}

std::vector<double> green_u_field(const Bundle& b, GreenSide which, double h) {
    const ConformalSurface& s = b.surface();
    const double Rx = s.extended_radius();
    const int nt = b.nth();
    const Grid2D& g = b.grid();
    std::vector<double> U(b.nodes() * nt, 0.0);
    parallel_for(b.nodes(), [&](std::size_t p) {
        if (b.wq[p] == 0) return;
        double x1 = g.x(static_cast<int>(p / g.n)), x2 = g.x(static_cast<int>(p % g.n));
        for (int k = 0; k < nt; ++k) {
            double th = b.theta(k);
            // U+ vanishes-at-entry: flow backwards; U-: flow forwards
            U[p * nt + k] = which == GreenSide::plus ? jacobi_ratio(s, SMPoint{x1, x2, th + kPi}, h, Rx)
                                                     : -jacobi_ratio(s, SMPoint{x1, x2, th}, h, Rx);
        }
    });
    return U;
}

IdentityReport green_identity_residual(const SMField& Z, const AttenuationPair* att, const std::vector<double>& U,
                                       double tol) {
    if (att && !att->unitary()) throw ConfigError("green identity needs a skew-Hermitian connection");
    const Bundle& b = *Z.bundle();
    const int n = Z.channels(), nt = Z.nth();
    SMField XZ = att ? apply_XA(Z, *att) : apply_X(Z);
    SMField D = XZ, KZ = Z;
    for (std::size_t p = 0; p < b.nodes(); ++p)
        for (int c = 0; c < n; ++c)
            for (int k = 0; k < nt; ++k) {
                D.at(p, c, k) -= U[p * nt + k] * Z.at(p, c, k);
                KZ.at(p, c, k) *= b.K[p];
            }
    IdentityReport r;
    r.name = "green_identity";
    double lhs = l2_norm2(D), xz = l2_norm2(XZ), kz = l2_inner(KZ, Z).real();
    r.add("||XZ-UZ||^2", lhs);
    r.add("||XZ||^2", xz);
    r.add("(KZ,Z)", kz);
    r.lhs = lhs;
    r.rhs = xz - kz;
    r.close_identity(tol);
    return r;
}

IdentityReport green_identity_residual(const SMField& Z, const AttenuationPair* att, GreenSide which, double tol,
                                       double h) {
    return green_identity_residual(Z, att, green_u_field(*Z.bundle(), which, h), tol);
}

KappaAlpha estimate_kappa_alpha(const BundleP& b, const KappaAlphaOptions& opt) {
    if (opt.samples < 1 || opt.alpha_steps < 1) throw ConfigError("estimate_kappa_alpha: bad sample counts");
    KappaAlpha out;
    out.samples = opt.samples;
    out.unitary_samples = opt.unitary_samples;
    out.seed = opt.seed;
    out.curvature_bound = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < b->nodes(); ++p)
        if (b->wq[p] > 0) out.curvature_bound = std::min(out.curvature_bound, -b->K[p]);

    std::vector<AttenuationPair> atts;
    for (int j = 0; j < opt.unitary_samples; ++j) {
        AttenuationOptions ao;
        ao.unitary = true;
        ao.a_scale = opt.a_scale;
        ao.phi_scale = 0;
        atts.push_back(random_attenuation(b->grid(), 1, b->surface().radius(), opt.seed + 7919 * (j + 1), ao));
    }

    // per sample: ||Z||^2, -(KZ,Z), and ||(X+A)Z||^2 for every A in the family
    std::vector<double> nz(opt.samples), kz(opt.samples);
    std::vector<std::vector<double>> xz(opt.samples);
    for (int i = 0; i < opt.samples; ++i) {
        std::mt19937_64 rng(opt.seed + i);
        std::vector<int> degs;
        int cnt = 1 + static_cast<int>(rng() % 3);
        for (int q = 0; q < cnt; ++q) {
            int d = static_cast<int>(rng() % 5);
            if (std::find(degs.begin(), degs.end(), d) == degs.end()) degs.push_back(d);
        }
        TestFieldOptions to;
        to.spatial_order = 2 + i % 3;
        SMField Z = make_test_field(b, 1, opt.seed + i, degs, to);
        nz[i] = l2_norm2(Z);
        SMField KZ = Z;
        for (std::size_t p = 0; p < b->nodes(); ++p)
            for (int k = 0; k < b->nth(); ++k) KZ.at(p, 0, k) *= b->K[p];
        kz[i] = -l2_inner(KZ, Z).real();
        xz[i].push_back(l2_norm2(apply_X(Z)));
        for (const auto& a : atts) xz[i].push_back(l2_norm2(apply_XA(Z, a)));
    }
    out.min_x_ratio = out.min_k_ratio = std::numeric_limits<double>::infinity();
    for (int i = 0; i < opt.samples; ++i) {
        out.min_k_ratio = std::min(out.min_k_ratio, kz[i] / nz[i]);
        for (double x : xz[i]) out.min_x_ratio = std::min(out.min_x_ratio, x / nz[i]);
    }
    double best = -1;
    for (int a = 0; a <= opt.alpha_steps; ++a) {
        double alpha = double(a) / opt.alpha_steps;
        double kap = std::numeric_limits<double>::infinity();
        for (int i = 0; i < opt.samples; ++i)
            for (double x : xz[i]) kap = std::min(kap, ((1 - alpha) * x + kz[i]) / nz[i]);
        out.alphas.push_back(alpha);
        out.kappas.push_back(kap);
        if (alpha > 0 && kap > 0 && alpha * kap > best) {
            best = alpha * kap;
            out.alpha = alpha;
            out.kappa = kap;
        }
    }
    out.note = "lower bound over the sampled family of Z and A only; uniformity over all unitary A is not certified";
    return out;
}

}  // namespace xray
