#pragma once

#include <optional>
#include <vector>

#include "xray/attenuation.hpp"
#include "xray/report.hpp"
#include "xray/sphere_bundle.hpp"

namespace xray {

// X^A u = Xu + A(x, theta) u with A(x, theta) = e^{-lambda}(A1 cos + A2 sin).
SMField apply_XA(const SMField& u, const AttenuationPair& att);
// Pointwise multiplication by an n x n node field (row-major).
SMField multiply_nodes(const SMField& u, const std::vector<cd>& M);
SMField multiply_A(const SMField& u, const AttenuationPair& att);
SMField multiply_Phi(const SMField& u, const AttenuationPair& att);
// *F_A = e^{-2 lambda}(d1 A2 - d2 A1 + [A1, A2]) per node
std::vector<cd> hodge_curvature(const Bundle& b, const AttenuationPair& att);

// ||V X^A u||^2 = ||X^A V u||^2 - (K Vu, Vu) - (*F_A u, Vu) + ||X^A u||^2;
// with att = nullptr the last-but-one term is absent.
IdentityReport pestov_report(const SMField& u, const AttenuationPair* att = nullptr, double tol = 1e-3);

// Degree-l identity alpha_{l-1}||X_- u_l||^2 - (K Vu_l, Vu_l) + ||Z(u_l)||^2
// = beta_{l+1}||X_+ u_l||^2 with u_l the degree-l projection of u.
IdentityReport pestov_localized_report(const FourierModes& u, int l, double tol = 1e-3);
IdentityReport pestov_localized_report(const SMField& u, int l, double tol = 1e-3);

// Same identity summed over all degrees, computed from the unprojected field.
IdentityReport pestov_global_xpm_report(const FourierModes& u, double tol = 1e-3);

// Sum of the localized reports against the global forms: the summed signed
// residual equals the global X+- one, and minus the VX-form one.
struct LocalizationSum {
    double local_lhs = 0, local_rhs = 0;    // sums of localized sides
    double global_lhs = 0, global_rhs = 0;  // X+- form on the full field
    double local_signed = 0;                // sum of (lhs - rhs)
    double vx_signed = 0;                   // lhs - rhs of pestov_report
    double scale = 0;
    double totals_error = 0;     // max side mismatch / scale
    double vx_error = 0;         // |local_signed + vx_signed| / scale
};
LocalizationSum localization_sum(const SMField& u, int lmax = -1);

// (K Vu, Vw) and the Z pairing for u in degree m, w in degree l.
struct CrossTerm {
    cd kvv = 0;
    cd z = 0;
    double norm_vu = 0, norm_vw = 0;
    double relative() const;
};
CrossTerm localization_crossterm(const SMField& u, const SMField& w);

// Degrees whose norm is at most rel times the total norm are dropped from
// Carleman sums.
constexpr double kDegreeTruncation = 1e-13;

// sum_{l>=m} l^{2 tau}||u_l||^2 <= (d+4)^2/(kappa tau) sum_{l>=m+1} l^{2 tau}||(Xu)_l||^2, d = 2
IdentityReport carleman_log_report(const SMField& u, double tau, int m, double kappa);

// sum_{l>=m} e^{2 tau l}||u_l||^2 <= 24/(kappa e^{2 tau}) sum_{l>=m+1} e^{2 tau l}||(Xu)_l||^2.
// ConfigError when tau fails e^{4 tau} > 12 or m < m0.
IdentityReport carleman_linear_report(const SMField& u, double tau, int m, double kappa);

// Mixed norms N_s(u) and ||V X u||_{L2 H^s}; PASS iff N_s <= C ||VXu||_s with
// C from shifted_constant. At s = 0 the unweighted form
// ||Xu||^2 + ||X_perp u||^2 + ||Vu||^2 <= 2 C^2 ||VXu||^2 is also checked.
IdentityReport shifted_pestov_report(const SMField& u, double s, double kappa);

// Theorem 8.1 replay on a manufactured solution of (X + A + Phi)u = -f.
struct AbsorptionOptions {
    double radius = 0.6;
    double kappa = 1;       // scaled_hyperbolic curvature
    int grid = 96, nth = 32;
    int degree = 2;         // D, the degree of u
    int channels = 2;
    double R_target = 0.05;
    std::uint64_t seed = 7;
    double cutoff_exponent = 6;  // smoothness of u at the boundary
    int l0 = 2;
    // ray recovery of u at the nodes of a coarser bundle
    bool ray_check = true;
    int ray_grid = 48, ray_nth = 16;
    double ray_h = 0.01;
    double ray_rel_tol = 1e-6;  // weighted tail / head of the recovered u
};
struct AbsorptionReplay {
    double R = 0, C = 0, kappa = 0, tau = 0;
    long m = 0;
    double CR_over_tau = 0;        // <= 1/2 by the choice of tau
    double tail = 0, floor = 0;    // weighted tail of u and its round-off floor
    double ray_tail = 0, ray_head = 0, ray_error = 0;
    bool ray_pass = true;
    std::vector<double> degree_norms, ray_degree_norms;
    IdentityReport carleman;       // carleman_log_report at (tau, m)
    bool pass = false;
};
AbsorptionReplay absorption_replay(const AbsorptionOptions& opt = {});

}  // namespace xray
