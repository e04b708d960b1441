#include "xray/weights.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "xray/common.hpp"

namespace xray {

namespace {

mpq_class qpow(const mpq_class& b, long e) {
    mpz_class num, den;
    mpz_pow_ui(num.get_mpz_t(), b.get_num_mpz_t(), static_cast<unsigned long>(e));
    mpz_pow_ui(den.get_mpz_t(), b.get_den_mpz_t(), static_cast<unsigned long>(e));
    mpq_class r(num, den);
    r.canonicalize();
    return r;
}

bool is_half_integer_nonneg(double s) {
    double t = 2 * s;
    return t >= 0 && std::abs(t - std::round(t)) < 1e-12;
}

// (1+x)^a - 1 for x > -1 without cancellation
double pow1pm1(double x, double a) {
    if (a == 0) return 0;
    return std::expm1(a * std::log1p(x));
}

}  // namespace

long lambda_eig(long m, long d) { return m * (m + d - 2); }

AlphaBeta alpha_beta(long l, long d) {
    if (d < 2) throw ConfigError("alpha_beta: d must be >= 2");
    if (l < -1) throw ConfigError("alpha_beta: l must be >= -1");
    AlphaBeta r{0, 0};
    if (l == -1) return r;
    if (l == 0) {
        r.alpha = d - 1;
        return r;
    }
    mpq_class a(2 * l + d - 2);
    r.alpha = a * (1 + mpq_class(1, l + d - 2));
    r.beta = l == 1 ? mpq_class(0) : a * (1 - mpq_class(1, l));
    return r;
}

double alpha_d(long l, long d) {
    if (l == -1) return 0;
    if (l == 0) return static_cast<double>(d - 1);
    double a = 2.0 * l + d - 2;
    return a * (1 + 1.0 / (l + d - 2));
}

double beta_d(long l, long d) {
    if (l <= 1) return 0;
    double a = 2.0 * l + d - 2;
    return a * (1 - 1.0 / l);
}

mpq_class miraculous_residual(long l, long d) {
    if (l < 1) throw ConfigError("miraculous identity needs l >= 1");
    mpq_class lam(lambda_eig(l, d));
    mpq_class lhs = lam * (1 - mpq_class(1, l)) * (1 + mpq_class(1, l + d - 2));
    return lhs - (lam - (d - 1));
}

WeightSequence WeightSequence::power(int d, double s) {
    WeightSequence w;
    w.d = d;
    w.gamma2 = [s](long l) { return l == 0 ? (s == 0 ? 1.0 : 0.0) : std::pow(static_cast<double>(l), 2 * s); };
    if (is_half_integer_nonneg(s)) {
        long e = std::lround(2 * s);
        w.gamma2_exact = [e](long l) { return qpow(mpq_class(l), e); };
    }
    return w;
}

WeightSequence WeightSequence::geometric(int d, const mpq_class& q) {
    WeightSequence w;
    w.d = d;
    double qd = q.get_d();
    w.gamma2 = [qd](long l) { return std::pow(qd, 2.0 * l); };
    w.gamma2_exact = [q](long l) { return qpow(q, 2 * l); };
    return w;
}

std::vector<bool> weight_condition_check(const WeightSequence& ws, long m, long lmax) {
    std::vector<bool> out;
    for (long l = m + 1; l <= lmax; ++l) {
        if (ws.gamma2_exact) {
            AlphaBeta ab = alpha_beta(l, ws.d);
            out.push_back(ab.alpha * ws.gamma2_exact(l + 1) > ab.beta * ws.gamma2_exact(l - 1));
        } else {
            out.push_back(alpha_d(l, ws.d) * ws.gamma2(l + 1) > beta_d(l, ws.d) * ws.gamma2(l - 1));
        }
    }
    return out;
}

double carleman_rhs_coefficient(long l, const WeightSequence& ws) {
    if (weight_condition_check(ws, l - 1, l).front() == false)
        throw ConfigError("weight condition (5.1) fails at l = " + std::to_string(l));
    double P = alpha_d(l, ws.d) * ws.gamma2(l + 1);
    double Q = beta_d(l, ws.d) * ws.gamma2(l - 1);
    double dl = ws.delta(l);
    return (1 + (1 - dl) / dl * Q / P) * P * Q / (P - Q);
}

LhsCoefficients carleman_lhs_coefficients(long l, const WeightSequence& ws) {
    LhsCoefficients c;
    c.xminus_head = alpha_d(l - 1, ws.d) * ws.gamma2(l);
    double prev = l >= 2 ? beta_d(l - 1, ws.d) * ws.gamma2(l - 2) : 0.0;
    c.xminus_tail = (1 - ws.delta(l - 1)) * (c.xminus_head - prev);
    return c;
}

DenominatorCheck denominator_bound_check(long d, long two_s, long lmax) {
    DenominatorCheck r;
    for (long l = 2; l <= lmax; ++l) {
        AlphaBeta ab = alpha_beta(l, d);
        mpq_class P = ab.alpha * qpow(mpq_class(l + 1), two_s);
        mpq_class Q = ab.beta * qpow(mpq_class(l - 1), two_s);
        mpq_class bound = mpq_class(2 * (two_s + 1)) * qpow(mpq_class(l), two_s);
        bool b = P - Q >= bound, q = Q <= 3 * P;
        r.bound_ok = r.bound_ok && b;
        r.ratio_ok = r.ratio_ok && q;
        if ((!b || !q) && r.first_failure < 0) r.first_failure = l;
    }
    return r;
}

double f_s(double s, double t) {
    if (t <= 0 || t >= 1) throw ConfigError("f_s: t must lie in (0,1)");
    return (pow1pm1(t, s) - pow1pm1(-t, s)) / t;
}

double eta_s(double s, long l0) { return -f_s(s, 1.0 / static_cast<double>(l0)); }

ElementaryMargin elementary_bound_check(long l, double s, long l0) {
    if (l < 1) throw ConfigError("elementary bound needs l >= 1");
    if (s <= -1) throw ConfigError("elementary bound needs s > -1");
    double ld = static_cast<double>(l);
    double diff_norm;  // ((l+1)^s - (l-1)^s) / l^{s-1}
    if (s == 0) {
        diff_norm = 0;
    } else if (l == 1) {
        if (s < 0) throw ConfigError("elementary bound with s < 0 needs l >= 2");
        diff_norm = std::pow(2.0, s);
    } else {
        diff_norm = ld * (pow1pm1(1 / ld, s) - pow1pm1(-1 / ld, s));
    }
    double bound_norm;
    if (s >= 0) {
        bound_norm = s;
    } else {
        if (l < l0 || l0 < 2) throw ConfigError("elementary bound with s < 0 needs l >= l0 >= 2");
        bound_norm = -eta_s(s, l0);
    }
    ElementaryMargin m;
    m.normalized = diff_norm - bound_norm;
    m.margin = m.normalized * std::pow(ld, s - 1);
    return m;
}

double optimal_constant_term(long d, double s, long l) {
    double ld = static_cast<double>(l);
    double a = alpha_d(l, d), b = beta_d(l, d);
    double num = a * b * std::exp(2 * s * std::log1p(-1 / (ld * ld)));
    double den = (a - b) + a * pow1pm1(1 / ld, 2 * s) - b * pow1pm1(-1 / ld, 2 * s);
    return num / (ld * ld * den);
}

OptimalConstant optimal_constant_estimate(long d, double s, long m, long lmax) {
    if (m < 1) throw ConfigError("optimal constant needs m >= 1");
    if (s < 0) throw ConfigError("optimal constant needs s >= 0");
    OptimalConstant r;
    r.lmax = lmax;
    r.upper = (d + 4.0) * (d + 4.0) / (2 * s + 1);
    r.limit = 1 / (2 * s + 1);
    r.scan = -1;
    for (long l = m + 1; l <= lmax; ++l) {
        double t = optimal_constant_term(d, s, l);
        if (t > r.scan) {
            r.scan = t;
            r.argmax = l;
        }
    }
    r.value = std::max(r.scan, r.limit);
    return r;
}

NonpositiveWeights nonpositive_weight_coeffs(long d, double tau, double delta, long lmax, long table_len) {
    if (!(delta > 0 && delta < 1)) throw ConfigError("delta must lie in (0,1)");
    NonpositiveWeights r;
    r.lmax = lmax;
    r.mu = std::exp(2 * tau);
    r.gate = 4 * (1 + delta) / (1 - delta);
    r.admissible = r.mu * r.mu > r.gate;
    const double mu2 = r.mu * r.mu;
    long last_p_fail = 0, last_l_fail = 0;
    std::vector<double> ct(lmax + 1, 0.0);
    for (long l = 1; l <= lmax; ++l) {
        double ld = static_cast<double>(l);
        double lam = static_cast<double>(lambda_eig(l, d));
        double A = alpha_d(l, d) - 2 * delta / (ld + 1) * lam * std::pow(1 + 1 / (ld + d - 2), 2);
        double lamB = lam * (1 - 1 / ld) * (1 - 1 / ld);
        double B = beta_d(l, d) + (lamB == 0 ? 0.0 : 2 * delta / (ld - 1) * lamB);
        double p = A * mu2 / (ld + 1);
        double q = l >= 2 ? B / (ld - 1) : 0.0;
        double lam_prev = static_cast<double>(lambda_eig(l - 1, d));
        double L = alpha_d(l - 1, d) -
                   (lam_prev == 0 ? 0.0 : 2 * delta / ld * lam_prev * std::pow(1 + 1 / (ld + d - 3), 2));
        if (!(p > q)) last_p_fail = l;
        if (L < 0) last_l_fail = l;
        ct[l] = p > q ? p * q / (p - q) / (2 * delta) : std::numeric_limits<double>::infinity();
        if (l <= table_len) {
            r.p.push_back(p);
            r.q.push_back(q);
            r.lhs.push_back(L);
        }
    }
    r.m0 = std::max({1L, last_p_fail, last_l_fail + 1});
    r.constant = 0;
    for (long l = r.m0 + 1; l <= lmax; ++l) r.constant = std::max(r.constant, ct[l]);
    return r;
}

AppendixBCoeffs appendixB_weight_coeffs(double tau, double R, double s) {
    AppendixBCoeffs c;
    c.muminus_factor = 2 * (std::exp(4 * tau) - 2);
    c.rhs_factor = 2 / (-std::expm1(-2 * tau));
    if (s > 0) {
        double x = 2 * R / s;
        c.band_lo = 1 + x;
        c.band_hi = x < 1 ? 1 / (1 - x) : std::numeric_limits<double>::infinity();
        c.band_nonempty = x < 1 && c.band_lo <= c.band_hi;
        c.sufficient = s > 4 * R;
    }
    return c;
}

long degree_bound(long l0, long m0_f, double C, double R) {
    double m = std::max({static_cast<double>(l0 - 1), static_cast<double>(m0_f), 2 * C * R});
    return static_cast<long>(std::ceil(m - 1e-12));
}

GrowthCheck heuristic_growth_check(const mpq_class& R, const mpq_class& kappa, long m, long k_max, double fit_lo,
                                   double fit_hi) {
    if (kappa <= 0) throw ConfigError("kappa must be positive");
    GrowthCheck g;
    mpq_class S = R / kappa;
    g.expected = 0.5 * S.get_d();
    const double Sd = S.get_d();
    const long k_exact = std::min(k_max, 50L);

    mpq_class r = 1, prod = 1;
    g.product_exact = g.admissible_exact = true;
    bool S_int = S.get_den() == 1;
    long Si = S_int ? S.get_num().get_si() : 0;
    for (long k = 1; k <= k_exact; ++k) {
        long l = m + 2 * k;
        mpq_class prev = r;
        r = prev * (mpq_class(l) + 2 * S) / l;
        prod *= (mpq_class(m + 2 * k) + 2 * S) / (m + 2 * k);
        if (!(2 * S * prev <= l * (r - prev))) g.admissible_exact = false;
        if (!(r >= prod)) g.product_exact = false;
        if (S_int && Si >= 0) {
            mpq_class lower = qpow(mpq_class(l), Si) / qpow(mpq_class(m) + 2 * S, Si);
            if (!(r >= lower)) g.product_exact = false;
        }
    }

    double rd = 1;
    g.l.push_back(m);
    g.r.push_back(1);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    long cnt = 0;
    for (long k = 1; k <= k_max; ++k) {
        long l = m + 2 * k;
        rd *= 1 + 2 * Sd / l;
        g.l.push_back(l);
        g.r.push_back(rd);
        if (l >= fit_lo && l <= fit_hi) {
            double x = std::log(static_cast<double>(l)), y = std::log(rd);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            ++cnt;
        }
    }
    if (cnt >= 2) g.slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    return g;
}

NegativeCompletion negative_s_completion(long d, double s, long len) {
    if (d < 3 || !(s > -0.5 && s < 0)) throw ConfigError("negative completion needs d >= 3 and -1/2 < s < 0");
    NegativeCompletion r;
    long l0 = 2;
    while ((d - 2) * eta_s(2 * s, l0) / l0 > 2 * s + 1) ++l0;
    r.l0 = l0;
    if (len < l0 + 3) len = l0 + 3;
    r.gamma2.assign(len, 0.0);
    for (long l = l0; l < len; ++l) r.gamma2[l] = std::pow(static_cast<double>(l), 2 * s);
    for (long l = l0; l >= 1; --l) {
        double b = beta_d(l, d);
        // beta_1 = 0 leaves gamma_0 free; it never enters (5.1) with l >= 1
        r.gamma2[l - 1] = b == 0 ? r.gamma2[l] : 0.5 * alpha_d(l, d) / b * r.gamma2[l + 1];
    }
    r.condition_ok = true;
    for (long l = 1; l + 1 < len; ++l)
        if (!(alpha_d(l, d) * r.gamma2[l + 1] > beta_d(l, d) * r.gamma2[l - 1])) r.condition_ok = false;

    const auto& g = r.gamma2;
    double c = std::numeric_limits<double>::infinity(), C = 0;
    for (long l = 1; l < l0; ++l) {
        double ld = static_cast<double>(l);
        double head = alpha_d(l - 1, d) * g[l];
        c = std::min(c, head / (2 * std::pow(ld, 2 * s + 1)));
        if (l >= 2) {
            double tail = 0.5 * (head - beta_d(l - 1, d) * g[l - 2]);
            c = std::min(c, tail / ((2 * s + 1) * std::pow(ld - 1, 2 * s)));
        }
        c = std::min(c, lambda_eig(l, d) * g[l] / std::pow(ld, 2 * s + 2));
        c = std::min(c, g[l] / std::pow(ld, 2 * s));
    }
    for (long l = 1; l <= l0; ++l) {
        double P = alpha_d(l, d) * g[l + 1], Q = beta_d(l, d) * g[l - 1];
        C = std::max(C, (1 + Q / P) * P * Q / (P - Q) / std::pow(static_cast<double>(l), 2 * s + 2));
    }
    r.c = c;
    r.C = C;
    return r;
}

ShiftedConstant shifted_constant(long d, double s, double kappa, long lmax) {
    if (s <= -0.5) throw ConfigError("shifted constant needs s > -1/2");
    if (!(d == 2 || s >= 0)) throw ConfigError("explicit shifted constant needs d = 2 or s >= 0");
    if (kappa <= 0) throw ConfigError("kappa must be positive");
    ShiftedConstant c;
    c.C51 = (d + 4.0) * (d + 4.0) / (2 * s + 1);
    auto br = [s](double l) { return std::pow(1 + l * l, s); };
    auto coef_xm = [s](long j) {
        double jd = static_cast<double>(j);
        return j <= 2 ? 2 * std::pow(jd, 2 * s + 1) : (2 * s + 1) * std::pow(jd - 1, 2 * s);
    };
    double ra = 1 / (2 * s + 1), rb = 1, c1 = 1;  // limits as l -> infinity
    for (long l = 0; l <= lmax; ++l) {
        double ld = static_cast<double>(l);
        ra = std::max(ra, br(ld) / coef_xm(l + 1));
        if (l >= 1) rb = std::max(rb, br(ld) / std::pow(ld, 2 * s));
        if (l >= 2) c1 = std::max(c1, std::pow(ld, 2 * s) / br(ld));
    }
    c.r_a = ra;
    c.r_b = rb;
    c.r_c = rb / kappa;
    c.c1 = c1;
    c.C = std::sqrt(2 + std::max({3 * ra, c.r_b, c.r_c}) * c.C51 * c1);
    return c;
}

}  // namespace xray
