#include "xray/identities.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cfloat>
#include <cmath>

#include "xray/parallel.hpp"
#include "xray/transport.hpp"
#include "xray/weights.hpp"

namespace xray {

namespace {

void require_grid(const Bundle& b, const AttenuationPair& att) {
    if (!same_grid(b.grid(), att.grid)) throw ConfigError("attenuation grid differs from the bundle grid");
}

// u(node, :, k) -> M(node, theta_k) u with M built per node and angle
template <class Build>
SMField multiply_angle(const SMField& u, Build&& build) {
    const BundleP& b = u.bundle();
    const int n = u.channels(), nt = u.nth();
    SMField r(b, n);
    parallel_for(b->nodes(), [&](std::size_t p) {
        std::vector<cd> M(static_cast<std::size_t>(n) * n);
        for (int k = 0; k < nt; ++k) {
            build(p, k, M.data());
            for (int i = 0; i < n; ++i) {
                cd s = 0;
                for (int j = 0; j < n; ++j) s += M[i * n + j] * u.at(p, j, k);
                r.at(p, i, k) = s;
            }
        }
    });
    r.boundary_vanishing = u.boundary_vanishing;
    return r;
}

SMField scale_nodes(const SMField& u, const std::vector<double>& w) {
    SMField r = u;
    const std::size_t blk = static_cast<std::size_t>(u.channels()) * u.nth();
    for (std::size_t p = 0; p < u.bundle()->nodes(); ++p)
        for (std::size_t q = 0; q < blk; ++q) r.v[p * blk + q] *= w[p];
    return r;
}

// 2 pi sum_x wq |A_k + sign B_k|^2 at signed frequency k
double pair_norm2(const FourierModes& A, const FourierModes* B, int k, double sign = 1) {
    const Bundle& b = *A.bundle();
    const int n = A.channels();
    double s = 0;
    for (std::size_t p = 0; p < b.nodes(); ++p) {
        if (b.wq[p] == 0) continue;
        double t = 0;
        for (int c = 0; c < n; ++c) {
            cd v = A.at(p, c, k);
            if (B) v += sign * B->at(p, c, k);
            t += std::norm(v);
        }
        s += b.wq[p] * t;
    }
    return kTwoPi * s;
}

// 2 pi sum_x wq K |k|^2 (|u_k|^2 + |u_{-k}|^2)
double kvv_degree(const FourierModes& u, int l) {
    if (l == 0) return 0;
    const Bundle& b = *u.bundle();
    const int n = u.channels();
    double s = 0;
    for (std::size_t p = 0; p < b.nodes(); ++p) {
        if (b.wq[p] == 0) continue;
        double t = 0;
        for (int c = 0; c < n; ++c) t += std::norm(u.at(p, c, l)) + std::norm(u.at(p, c, -l));
        s += b.wq[p] * b.K[p] * t;
    }
    return kTwoPi * double(l) * l * s;
}

// Degree-l pieces computed from the eta split of a field containing u_l.
struct DegreeTerms {
    double xm = 0, xp = 0, z = 0, kvv = 0;
};

DegreeTerms degree_terms(const FourierModes& u, const EtaSplit& S, int l) {
    DegreeTerms t;
    if (l == 0) {
        t.xp = pair_norm2(S.a, nullptr, 1) + pair_norm2(S.b, nullptr, -1);
    } else if (l == 1) {
        t.xm = pair_norm2(S.a, &S.b, 0, 1);
        t.z = pair_norm2(S.a, &S.b, 0, -1);
        t.xp = pair_norm2(S.a, nullptr, 2) + pair_norm2(S.b, nullptr, -2);
    } else {
        t.xm = pair_norm2(S.b, nullptr, l - 1) + pair_norm2(S.a, nullptr, -(l - 1));
        t.xp = pair_norm2(S.a, nullptr, l + 1) + pair_norm2(S.b, nullptr, -(l + 1));
    }
    t.kvv = kvv_degree(u, l);
    return t;
}

int max_degree(const FourierModes& u) { return u.nth() / 2 - 2; }

void check_degree(const FourierModes& u, int l) {
    if (l < 0) throw ConfigError("degree must be nonnegative");
    if (l > max_degree(u)) throw ConfigError("degree too close to the fiber Nyquist frequency");
}

FourierModes x_modes(const FourierModes& U) {
    EtaSplit S = eta_split(U);
    FourierModes X = S.a;
    for (std::size_t i = 0; i < X.coeffs.size(); ++i) X.coeffs[i] += S.b.coeffs[i];
    return X;
}

// Degree norms with numerically insignificant degrees zeroed.
std::vector<double> truncated_norms(const FourierModes& U) {
    std::vector<double> d = U.degree_norms();
    double tot = 0;
    for (double x : d) tot += x;
    double cut = kDegreeTruncation * kDegreeTruncation * tot;
    for (double& x : d)
        if (x <= cut) x = 0;
    return d;
}

double bracket(double l, double s) { return std::pow(1 + l * l, s); }

double opnorm(const cd* a, int n) {
    Eigen::Map<const Eigen::Matrix<cd, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> M(a, n, n);
    return Eigen::JacobiSVD<Eigen::MatrixXcd>(M).singularValues()(0);
}

}  // namespace

SMField multiply_nodes(const SMField& u, const std::vector<cd>& M) {
    const int n = u.channels();
    return multiply_angle(u, [&](std::size_t p, int, cd* out) {
        std::copy_n(&M[p * n * n], n * n, out);
    });
}

SMField multiply_A(const SMField& u, const AttenuationPair& att) {
    const Bundle& b = *u.bundle();
    require_grid(b, att);
    if (att.n != u.channels()) throw ConfigError("attenuation and field channel counts differ");
    const int nn = att.n * att.n;
    return multiply_angle(u, [&](std::size_t p, int k, cd* out) {
        double c = b.el[p] * b.cos_t[k], s = b.el[p] * b.sin_t[k];
        for (int i = 0; i < nn; ++i) out[i] = c * att.a1(p)[i] + s * att.a2(p)[i];
    });
}

SMField multiply_Phi(const SMField& u, const AttenuationPair& att) {
    require_grid(*u.bundle(), att);
    if (att.n != u.channels()) throw ConfigError("attenuation and field channel counts differ");
    return multiply_nodes(u, att.Phi);
}

SMField apply_XA(const SMField& u, const AttenuationPair& att) {
    SMField r = apply_X(u);
    r += multiply_A(u, att);
    return r;
}

std::vector<cd> hodge_curvature(const Bundle& b, const AttenuationPair& att) {
    require_grid(b, att);
    std::vector<cd> F = connection_curvature(att);
    const std::size_t nn = att.nn();
    for (std::size_t p = 0; p < b.nodes(); ++p)
        for (std::size_t i = 0; i < nn; ++i) F[p * nn + i] *= b.el[p] * b.el[p];
    return F;
}

IdentityReport pestov_report(const SMField& u, const AttenuationPair* att, double tol) {
    IdentityReport r;
    r.name = att ? "pestov_attenuated" : "pestov";
    if (att && !att->unitary()) throw ConfigError("pestov identity needs a skew-Hermitian connection");
    const Bundle& b = *u.bundle();
    SMField Vu = apply_V(u);
    SMField XAu = att ? apply_XA(u, *att) : apply_X(u);
    SMField XAVu = att ? apply_XA(Vu, *att) : apply_X(Vu);
    double vxa = l2_norm2(apply_V(XAu));
    double xav = l2_norm2(XAVu);
    double kvv = l2_inner(scale_nodes(Vu, b.K), Vu).real();
    double xa = l2_norm2(XAu);
    r.add("||VXu||^2", vxa);
    r.add("||XVu||^2", xav);
    r.add("(KVu,Vu)", kvv);
    r.lhs = vxa;
    r.rhs = xav - kvv + xa;
    if (att) {
        double fterm = l2_inner(multiply_nodes(u, hodge_curvature(b, *att)), Vu).real();
        r.add("(*F_A u,Vu)", fterm);
        r.rhs -= fterm;
    }
    r.add("||Xu||^2", xa);
    r.close_identity(tol);
    return r;
}

IdentityReport pestov_localized_report(const FourierModes& u, int l, double tol) {
    check_degree(u, l);
    FourierModes P = u.degree(l);
    DegreeTerms t = degree_terms(P, eta_split(P), l);
    double a = alpha_d(l - 1, 2), bb = beta_d(l + 1, 2);
    IdentityReport r;
    r.name = "pestov_localized";
    r.add("degree", l);
    r.add("alpha_{l-1}", a);
    r.add("beta_{l+1}", bb);
    r.add("||X_-u||^2", t.xm);
    r.add("||Z(u)||^2", t.z);
    r.add("(KVu,Vu)", t.kvv);
    r.add("||X_+u||^2", t.xp);
    r.lhs = a * t.xm - t.kvv + t.z;
    r.rhs = bb * t.xp;
    // the sides can cancel on K = 0 fields only through the data, so the
    // scale includes every summand
    r.close_identity(tol, a * t.xm + std::abs(t.kvv) + t.z + bb * t.xp);
    return r;
}

IdentityReport pestov_localized_report(const SMField& u, int l, double tol) {
    return pestov_localized_report(fourier_modes(u), l, tol);
}

IdentityReport pestov_global_xpm_report(const FourierModes& u, double tol) {
    EtaSplit S = eta_split(u);
    double xm = 0, xp = 0, z = 0, kvv = 0;
    double lhs = 0, rhs = 0;
    for (int l = 0; l <= max_degree(u); ++l) {
        DegreeTerms t = degree_terms(u, S, l);
        double a = alpha_d(l - 1, 2), bb = beta_d(l + 1, 2);
        xm += a * t.xm;
        xp += bb * t.xp;
        z += t.z;
        kvv += t.kvv;
        lhs += a * t.xm - t.kvv + t.z;
        rhs += bb * t.xp;
    }
    IdentityReport r;
    r.name = "pestov_xpm";
    r.add("sum alpha||X_-u||^2", xm);
    r.add("sum ||Z(u)||^2", z);
    r.add("(KVu,Vu)", kvv);
    r.add("sum beta||X_+u||^2", xp);
    r.lhs = lhs;
    r.rhs = rhs;
    r.close_identity(tol, xm + std::abs(kvv) + z + xp);
    return r;
}

LocalizationSum localization_sum(const SMField& u, int lmax) {
    FourierModes U = fourier_modes(u);
    if (lmax < 0) lmax = max_degree(U);
    lmax = std::min(lmax, max_degree(U));
    LocalizationSum s;
    for (int l = 0; l <= lmax; ++l) {
        IdentityReport r = pestov_localized_report(U, l);
        s.local_lhs += r.lhs;
        s.local_rhs += r.rhs;
    }
    IdentityReport g = pestov_global_xpm_report(U);
    s.global_lhs = g.lhs;
    s.global_rhs = g.rhs;
    s.local_signed = s.local_lhs - s.local_rhs;
    IdentityReport vx = pestov_report(u);
    s.vx_signed = vx.lhs - vx.rhs;
    s.scale = std::max({std::abs(g.lhs), std::abs(g.rhs), vx.lhs, vx.rhs, 1e-300});
    s.totals_error =
        std::max(std::abs(s.local_lhs - s.global_lhs), std::abs(s.local_rhs - s.global_rhs)) / s.scale;
    s.vx_error = std::abs(s.local_signed + s.vx_signed) / s.scale;
    return s;
}

double CrossTerm::relative() const {
    double d = norm_vu * norm_vw;
    return d > 0 ? std::max(std::abs(kvv), std::abs(z)) / d : 0.0;
}

CrossTerm localization_crossterm(const SMField& u, const SMField& w) {
    const Bundle& b = *u.bundle();
    CrossTerm c;
    SMField Vu = apply_V(u), Vw = apply_V(w);
    c.kvv = l2_inner(scale_nodes(Vu, b.K), Vw);
    c.norm_vu = std::sqrt(l2_norm2(Vu));
    c.norm_vw = std::sqrt(l2_norm2(Vw));
    // Z(u) = -(X_perp u)_0 iv, whose coefficient is proportional to a_0 - b_0
    EtaSplit Su = eta_split(fourier_modes(u)), Sw = eta_split(fourier_modes(w));
    const int n = u.channels();
    cd z = 0;
    for (std::size_t p = 0; p < b.nodes(); ++p) {
        if (b.wq[p] == 0) continue;
        cd t = 0;
        for (int ch = 0; ch < n; ++ch)
            t += (Su.a.at(p, ch, 0) - Su.b.at(p, ch, 0)) * std::conj(Sw.a.at(p, ch, 0) - Sw.b.at(p, ch, 0));
        z += b.wq[p] * t;
    }
    c.z = kTwoPi * z;
    return c;
}

IdentityReport carleman_log_report(const SMField& u, double tau, int m, double kappa) {
    if (tau < 1) throw ConfigError("carleman_log needs tau >= 1");
    if (m < 1) throw ConfigError("carleman_log needs m >= 1");
    if (kappa <= 0) throw ConfigError("kappa must be positive");
    FourierModes U = fourier_modes(u);
    std::vector<double> un = truncated_norms(U), xn = truncated_norms(x_modes(U));
    double lhs = 0, sum = 0;
    for (std::size_t l = m; l < un.size(); ++l) lhs += std::exp(2 * tau * std::log(double(l))) * un[l];
    for (std::size_t l = m + 1; l < xn.size(); ++l) sum += std::exp(2 * tau * std::log(double(l))) * xn[l];
    const double constant = 36.0 / (kappa * tau);
    IdentityReport r;
    r.name = "carleman_log";
    r.add("tau", tau);
    r.add("m", m);
    r.add("kappa", kappa);
    r.add("constant", constant);
    r.add("sum l^{2tau}||u_l||^2", lhs);
    r.add("sum l^{2tau}||(Xu)_l||^2", sum);
    r.lhs = lhs;
    r.rhs = constant * sum;
    r.close_inequality();
    return r;
}

IdentityReport carleman_linear_report(const SMField& u, double tau, int m, double kappa) {
    if (kappa <= 0) throw ConfigError("kappa must be positive");
    NonpositiveWeights nw = nonpositive_weight_coeffs(2, tau, 0.5, 10000, 10);
    if (!nw.admissible)
        throw ConfigError("carleman_linear refused: e^{4 tau} = " + std::to_string(nw.mu * nw.mu) +
                          " does not exceed " + std::to_string(nw.gate));
    if (m < nw.m0) throw ConfigError("carleman_linear refused: m below m0 = " + std::to_string(nw.m0));
    FourierModes U = fourier_modes(u);
    std::vector<double> un = truncated_norms(U), xn = truncated_norms(x_modes(U));
    double lhs = 0, sum = 0;
    for (std::size_t l = m; l < un.size(); ++l) lhs += std::exp(2 * tau * double(l)) * un[l];
    for (std::size_t l = m + 1; l < xn.size(); ++l) sum += std::exp(2 * tau * double(l)) * xn[l];
    const double constant = 24.0 / (kappa * std::exp(2 * tau));
    IdentityReport r;
    r.name = "carleman_linear";
    r.add("tau", tau);
    r.add("m", m);
    r.add("m0", static_cast<double>(nw.m0));
    r.add("mu^2", nw.mu * nw.mu);
    r.add("kappa", kappa);
    r.add("constant", constant);
    r.add("sum e^{2tau l}||u_l||^2", lhs);
    r.add("sum e^{2tau l}||(Xu)_l||^2", sum);
    r.lhs = lhs;
    r.rhs = constant * sum;
    r.close_inequality();
    return r;
}

IdentityReport shifted_pestov_report(const SMField& u, double s, double kappa) {
    ShiftedConstant sc = shifted_constant(2, s, kappa);
    FourierModes U = fourier_modes(u);
    EtaSplit S = eta_split(U);
    std::vector<double> un = U.degree_norms(), xn = x_modes(U).degree_norms();
    double xm = 0, xp = 0, z = 0, vv = 0, rhs2 = 0;
    for (int l = 0; l <= max_degree(U); ++l) {
        DegreeTerms t = degree_terms(U, S, l);
        if (l >= 1) xm += bracket(l - 1, s) * t.xm;
        xp += bracket(l + 1, s) * t.xp;
        z += bracket(l, s) * t.z;
        vv += bracket(l, s) * double(l) * l * un[l];
    }
    for (std::size_t l = 0; l < xn.size(); ++l) rhs2 += bracket(double(l), s) * double(l) * l * xn[l];
    IdentityReport r;
    r.name = "shifted_pestov";
    r.add("s", s);
    r.add("kappa", kappa);
    r.add("C", sc.C);
    r.add("sum <l>^{2s}||X_-u_{l+1}||^2", xm);
    r.add("sum <l>^{2s}||X_+u_{l-1}||^2", xp);
    r.add("sum <l>^{2s}||Z(u_l)||^2", z);
    r.add("sum <l>^{2s}l^2||u_l||^2", vv);
    r.add("||VXu||_s^2", rhs2);
    double N = std::sqrt(xm + xp + z + vv), D = std::sqrt(rhs2);
    r.add("N_s", N);
    r.lhs = N;
    r.rhs = sc.C * D;
    r.close_inequality();
    if (s == 0) {
        double a = l2_norm2(apply_X(u)) + l2_norm2(apply_Xperp(u)) + l2_norm2(apply_V(u));
        double bnd = 2 * sc.C * sc.C * l2_norm2(apply_V(apply_X(u)));
        r.add("||Xu||^2+||X_perp u||^2+||Vu||^2", a);
        r.add("2C^2||VXu||^2", bnd);
        r.pass = r.pass && a <= bnd;
    }
    return r;
}

AbsorptionReplay absorption_replay(const AbsorptionOptions& opt) {
    AbsorptionReplay out;
    ConformalSurface surf = ConformalSurface::scaled_hyperbolic(opt.kappa, opt.radius);
    BundleP b = make_bundle(surf, opt.grid, opt.nth);
    const int n = opt.channels;
    AttenuationOptions ao;
    ao.a_scale = opt.R_target;
    ao.phi_scale = opt.R_target;
    AttenuationPair att = random_attenuation(b->grid(), n, opt.radius, opt.seed, ao);

    // R = max sup of ||Phi|| and ||e^{-lambda}(A1 -+ i A2)/2|| over the disc
    auto measure = [&] {
        double R = 0;
        std::vector<cd> M(att.nn());
        for (std::size_t p = 0; p < b->nodes(); ++p) {
            if (b->cover[p] == 0) continue;
            R = std::max(R, opnorm(att.phi(p), n));
            for (double sg : {-1.0, 1.0}) {
                for (std::size_t i = 0; i < att.nn(); ++i)
                    M[i] = 0.5 * b->el[p] * (att.a1(p)[i] + sg * cd(0, 1) * att.a2(p)[i]);
                R = std::max(R, opnorm(M.data(), n));
            }
        }
        return R;
    };
    double R0 = measure();
    if (R0 > 0) {
        for (auto* F : {&att.A1, &att.A2, &att.Phi})
            for (auto& x : *F) x *= opt.R_target / R0;
    }
    out.R = measure();

    std::vector<int> degs;
    for (int k = 0; k <= opt.degree; ++k) degs.push_back(k);
    TestFieldOptions to;
    to.cutoff_exponent = opt.cutoff_exponent;
    SMField u = make_test_field(b, n, opt.seed + 1, degs, to);
    SMField f = apply_XA(u, att);
    f += multiply_Phi(u, att);
    f *= -1.0;

    out.kappa = opt.kappa;
    out.C = 36.0 / opt.kappa;
    out.tau = std::max(2 * out.C * out.R, 1.0);
    out.m = degree_bound(opt.l0, opt.degree + 1, out.C, out.R);
    out.CR_over_tau = out.C * out.R / out.tau;

    FourierModes U = fourier_modes(u);
    out.degree_norms = U.degree_norms();
    double total = 0;
    for (double x : out.degree_norms) total += x;
    const double eps2 = DBL_EPSILON * DBL_EPSILON * total;
    for (std::size_t l = out.m; l < out.degree_norms.size(); ++l) {
        double w = std::exp(2 * out.tau * std::log(double(l)));
        out.tail += w * out.degree_norms[l];
        out.floor += w * eps2;
    }
    out.carleman = carleman_log_report(u, out.tau, static_cast<int>(out.m), out.kappa);
    out.pass = out.tail <= 2 * out.floor && out.CR_over_tau <= 0.5 + 1e-12;

    if (opt.ray_check) {
        // u(x, theta) from the transport equation with data f, at the nodes
        // of a coarser bundle
        BundleP rb = make_bundle(surf, opt.ray_grid, opt.ray_nth);
        FieldSampler fs(f), us(u);
        SMField ur(rb, n);
        TransportOptions to;
        to.h = opt.ray_h;
        const Grid2D& g = rb->grid();
        std::vector<double> err(rb->nodes(), 0.0);
        parallel_for(rb->nodes(), [&](std::size_t p) {
            int i = static_cast<int>(p / g.n), j = static_cast<int>(p % g.n);
            double x1 = g.x(i), x2 = g.x(j);
            if (!surf.contains(x1, x2, -1e-9)) return;
            std::vector<cd> ref(n);
            for (int k = 0; k < rb->nth(); ++k) {
                double th = rb->theta(k);
                std::vector<cd> v = solve_transport_ray(surf, &att, fs, SMPoint{x1, x2, th}, to);
                us.eval(x1, x2, th, ref.data());
                for (int c = 0; c < n; ++c) {
                    ur.at(p, c, k) = v[c];
                    err[p] = std::max(err[p], std::abs(v[c] - ref[c]));
                }
            }
        });
        out.ray_error = *std::max_element(err.begin(), err.end());
        out.ray_degree_norms = fourier_modes(ur).degree_norms();
        for (std::size_t l = 0; l < out.ray_degree_norms.size(); ++l) {
            double w = l == 0 ? 1.0 : std::exp(2 * out.tau * std::log(double(l)));
            (static_cast<long>(l) >= out.m ? out.ray_tail : out.ray_head) += w * out.ray_degree_norms[l];
        }
        out.ray_pass = out.ray_tail <= opt.ray_rel_tol * out.ray_head;
        out.pass = out.pass && out.ray_pass;
    }
    return out;
}

}  // namespace xray
