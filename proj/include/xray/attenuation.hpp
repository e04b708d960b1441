#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "xray/grid.hpp"
#include "xray/sphere_bundle.hpp"

namespace xray {

// Connection components A1, A2 and Higgs field Phi, each an n x n matrix per
// grid node (row-major). A(x, v) = A1 v^1 + A2 v^2 with v a g-unit vector.
struct AttenuationPair {
    Grid2D grid;
    int n = 1;
    std::vector<cd> A1, A2, Phi;
    double support_margin = 0;

    static AttenuationPair zero(const Grid2D& g, int n);
    std::size_t nn() const { return static_cast<std::size_t>(n) * n; }
    const cd* a1(std::size_t node) const { return &A1[node * nn()]; }
    const cd* a2(std::size_t node) const { return &A2[node * nn()]; }
    const cd* phi(std::size_t node) const { return &Phi[node * nn()]; }

    // Bicubic values at a point; zero outside the grid square.
    void eval(double x1, double x2, cd* a1, cd* a2, cd* phi) const;
    // max_i ||A_i + A_i^*|| over nodes inside radius R (R = 0: all nodes)
    double skew_defect(double R = 0) const;
    bool unitary(double R = 0) const { return skew_defect(R) <= 1e-12; }
    // max operator norms over nodes inside radius R
    double sup_norm_A(double R) const;
    double sup_norm_Phi(double R) const;
};

struct AttenuationOptions {
    double a_scale = 1.0;    // sup over the disc of the operator norms of A1, A2
    double phi_scale = 1.0;  // same for Phi
    bool unitary = false;    // A skew-Hermitian
    int order = 2;           // polynomial degree of entries
};
// Random smooth pair; sup norms over the disc of radius R are rescaled to
// the requested values.
AttenuationPair random_attenuation(const Grid2D& g, int n, double R, std::uint64_t seed,
                                   const AttenuationOptions& opt = {});
AttenuationPair constant_higgs(const Grid2D& g, int n, cd a);

// Gauge field Q = Id + psi M with psi = (1 - |x|^2/rho^2)_+^6 and M a random
// smooth matrix of sup norm `amplitude`; node-wise n x n row-major.
std::vector<cd> random_gauge(const Grid2D& g, int n, double rho, double amplitude, std::uint64_t seed);

// B = Q^{-1} dQ + Q^{-1} A Q, Psi = Q^{-1} Phi Q with dQ from 4th-order stencils.
// Checks min |det Q| > 1e-8 and Q = Id on the outermost ring within 1e-10.
AttenuationPair gauge_transform(const AttenuationPair& att, const std::vector<cd>& Q);

// Coordinate curvature dA + A wedge A as the function
// F12 = d1 A2 - d2 A1 + [A1, A2] per node.
std::vector<cd> connection_curvature(const AttenuationPair& att);
// max over nodes within radius R of ||F12|| (Frobenius)
double flatness_residual(const AttenuationPair& att, double R);

// Multiplies every field by a smooth radial cutoff equal to 1 on |x| <= r0
// and 0 for |x| >= r1.
AttenuationPair radial_cutoff(const AttenuationPair& att, double r0, double r1);
double smooth_step(double r, double r0, double r1);

bool same_grid(const Grid2D& a, const Grid2D& b);

}  // namespace xray
