#pragma once

#include <gmpxx.h>

#include <functional>
#include <optional>
#include <vector>

namespace xray {

// lambda_m = m(m+d-2)
long lambda_eig(long m, long d);

// alpha_l = (2l+d-2)(1 + 1/(l+d-2)), beta_l = (2l+d-2)(1 - 1/l), with
// alpha_0 = d-1, beta_0 = beta_1 = 0 and alpha_{-1} = beta_{-1} = 0.
struct AlphaBeta {
    mpq_class alpha, beta;
};
AlphaBeta alpha_beta(long l, long d);
double alpha_d(long l, long d);
double beta_d(long l, long d);

// lambda_l (1 - 1/l)(1 + 1/(l+d-2)) - (lambda_l - (d-1)); exactly 0 for l >= 1.
mpq_class miraculous_residual(long l, long d);

// gamma_l^2, delta_l, sigma_l as functions of l. gamma2_exact is optional and,
// when present, all comparisons are done in rational arithmetic.
struct WeightSequence {
    int d = 2;
    std::function<double(long)> gamma2;
    std::function<double(long)> delta = [](long) { return 1.0; };
    std::function<double(long)> sigma = [](long) { return 0.0; };
    std::function<mpq_class(long)> gamma2_exact;

    // gamma_l = l^s; exact when 2s is a nonnegative integer
    static WeightSequence power(int d, double s);
    // gamma_l = q^l with q rational
    static WeightSequence geometric(int d, const mpq_class& q);
};

// Eq. (5.1): alpha_l gamma_{l+1}^2 > beta_l gamma_{l-1}^2 for l = m+1..lmax.
std::vector<bool> weight_condition_check(const WeightSequence& ws, long m, long lmax);

// Bracketed right-hand coefficient of the general-weight Carleman estimate;
// ConfigError if (5.1) fails at l.
double carleman_rhs_coefficient(long l, const WeightSequence& ws);
// Left coefficients alpha_{l-1} gamma_l^2 and
// (1 - delta_{l-1})(alpha_{l-1} gamma_l^2 - beta_{l-1} gamma_{l-2}^2).
struct LhsCoefficients {
    double xminus_head, xminus_tail;
};
LhsCoefficients carleman_lhs_coefficients(long l, const WeightSequence& ws);

// Exact check of alpha_l gamma_{l+1}^2 - beta_l gamma_{l-1}^2 >= 2(2s+1) l^{2s}
// and beta_l gamma_{l-1}^2 <= 3 alpha_l gamma_{l+1}^2 for gamma_l = l^s,
// 2 <= l <= lmax; 2s a nonnegative integer.
struct DenominatorCheck {
    bool bound_ok = true, ratio_ok = true;
    long first_failure = -1;
};
DenominatorCheck denominator_bound_check(long d, long two_s, long lmax);

// Lemma 5.8. f_s(t) = ((1+t)^s - (1-t)^s)/t.
double f_s(double s, double t);
double eta_s(double s, long l0);
struct ElementaryMargin {
    double margin;      // (l+1)^s - (l-1)^s - bound
    double normalized;  // margin / l^{s-1}
};
// bound = s l^{s-1} for s >= 0 and -eta_s(l0) l^{s-1} for -1 < s < 0
ElementaryMargin elementary_bound_check(long l, double s, long l0 = 2);

struct OptimalConstant {
    double value = 0;   // sup over scanned l, never below the limit
    double scan = 0;    // max over m+1 <= l <= lmax
    long argmax = 0;
    double upper = 0;   // (d+4)^2/(2s+1)
    double limit = 0;   // 1/(2s+1)
    long lmax = 0;
};
OptimalConstant optimal_constant_estimate(long d, double s, long m, long lmax = 1000000);
double optimal_constant_term(long d, double s, long l);

// Theorem 6.1 weights: l gamma_l^2 = mu^l, sigma_l = 2 delta / l, mu = e^{2 tau}.
struct NonpositiveWeights {
    double mu = 0;
    bool admissible = false;  // mu^2 > 4(1+delta)/(1-delta)
    double gate = 0;          // 4(1+delta)/(1-delta)
    long m0 = 0;
    long lmax = 0;
    // sup_{l >= m0+1} c_l / (2 delta mu^{l-1}); the paper's bound is 24
    double constant = 0;
    double paper_constant = 24;
    // per l = 1..table_len: P_l/mu^{l-1}, Q_l/mu^{l-1}, left X_- coefficient
    std::vector<double> p, q, lhs;
};
NonpositiveWeights nonpositive_weight_coeffs(long d, double tau, double delta = 0.5, long lmax = 1000000,
                                             long table_len = 50);

// Appendix B: 2(e^{4 tau} - 2), 2/(1 - e^{-2 tau}), and the absorption band
// 1 + 2R/s <= a <= 1/(1 - 2R/s).
struct AppendixBCoeffs {
    double muminus_factor = 0;
    double rhs_factor = 0;
    double band_lo = 0, band_hi = 0;
    bool band_nonempty = false;
    bool sufficient = false;  // s > 4R
};
AppendixBCoeffs appendixB_weight_coeffs(double tau, double R = 0, double s = 1);

// m = ceil(max{l0 - 1, m0, 2 C R})
long degree_bound(long l0, long m0_f, double C, double R);

// Minimal r with 2S r_{l-2} <= l (r_l - r_{l-2}), S = R/kappa, r_m = 1,
// along l = m, m+2, ..., m + 2 k_max.
struct GrowthCheck {
    std::vector<long> l;
    std::vector<double> r;
    double slope = 0;            // log-log fit over [fit_lo, fit_hi]
    double expected = 0;         // R/(2 kappa)
    bool product_exact = false;  // rational check of the product bound, k <= 50
    bool admissible_exact = false;
};
GrowthCheck heuristic_growth_check(const mpq_class& R, const mpq_class& kappa, long m, long k_max,
                                   double fit_lo = 1e3, double fit_hi = 1e4);

// Low-degree completion for d >= 3, -1/2 < s < 0: gamma_l = l^s for l >= l0,
// gamma_{l-1}^2 = (1/2)(alpha_l/beta_l) gamma_{l+1}^2 below.
struct NegativeCompletion {
    long l0 = 0;
    std::vector<double> gamma2;  // l = 0..len-1
    bool condition_ok = false;   // (5.1) for 1 <= l < len-1
    double c = 0, C = 0;         // the proof's constants
};
NegativeCompletion negative_s_completion(long d, double s, long len = 200);

// Constant of the shifted Pestov inequality obtained from Theorem 5.1 at
// m = 1 (d = 2 or s >= 0).
struct ShiftedConstant {
    double C = 0;  // norm ratio bound
    double C51 = 0, c1 = 0, r_a = 0, r_b = 0, r_c = 0;
};
ShiftedConstant shifted_constant(long d, double s, double kappa, long lmax = 10000);

}  // namespace xray
