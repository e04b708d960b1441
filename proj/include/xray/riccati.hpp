#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xray/attenuation.hpp"
#include "xray/report.hpp"
#include "xray/sphere_bundle.hpp"
#include "xray/surface.hpp"

namespace xray {

struct RiccatiOptions {
    double h = 0.005;
    int collar_steps = 2;  // samples within this many steps of an endpoint are not evaluated
    int min_steps = 800;   // h is reduced so every chord gets at least this many steps
    double bradius = 0;    // 0: surface radius
};

// Green solutions along the chord through `start`, sampled at every step from
// the entry point (t = 0) to the exit point (t = t_exit). U+ comes from the
// Jacobi field vanishing at entry and is positive; U- from the one vanishing
// at exit and is negative.
struct RiccatiTrace {
    GeodesicTrace geodesic;
    std::vector<double> t, u_plus, u_minus, K;
    double t_entry = 0, t_exit = 0, t_start = 0, step = 0;
    int first = 0, last = -1;  // evaluated sample range
};
RiccatiTrace riccati_solutions(const ConformalSurface& s, const SMPoint& start, const RiccatiOptions& opt = {});

// max |u' + u^2 + K| over the middle half of the chord, both solutions,
// u' by 4th-order central differences.
double riccati_residual(const RiccatiTrace& tr);
// max |U - closed form| for constant curvature -kappa (kappa = 0: Euclidean)
double riccati_closed_form_error(const RiccatiTrace& tr, double kappa);
void save_riccati_csv(const RiccatiTrace& tr, const std::string& path);

enum class GreenSide { plus, minus };

// U+- at every (node, fiber angle) from Jacobi fields of the engulfing disc
// of radius s.extended_radius(); node-major, nth values per node. Nodes with
// zero quadrature weight are left at 0.
std::vector<double> green_u_field(const Bundle& b, GreenSide which, double h = 0.02);

// ||(X+A)Z - UZ||^2 = ||(X+A)Z||^2 - (KZ, Z)
IdentityReport green_identity_residual(const SMField& Z, const AttenuationPair* att, GreenSide which,
                                       double tol = 5e-3, double h = 0.02);
IdentityReport green_identity_residual(const SMField& Z, const AttenuationPair* att, const std::vector<double>& U,
                                       double tol = 5e-3);

struct KappaAlphaOptions {
    int samples = 200;
    std::uint64_t seed = 1000;
    int alpha_steps = 20;      // alpha = k / alpha_steps
    int unitary_samples = 0;   // random skew-Hermitian A besides A = 0
    double a_scale = 0.5;
};
struct KappaAlpha {
    double alpha = 0, kappa = 0;
    std::vector<double> alphas, kappas;  // kappa(alpha), worst case over the family
    double min_x_ratio = 0;              // min ||XZ||^2/||Z||^2
    double min_k_ratio = 0;              // min -(KZ,Z)/||Z||^2
    double curvature_bound = 0;          // min of -K over the disc
    int samples = 0, unitary_samples = 0;
    std::uint64_t seed = 0;
    std::string note;
};
KappaAlpha estimate_kappa_alpha(const BundleP& b, const KappaAlphaOptions& opt = {});

}  // namespace xray
