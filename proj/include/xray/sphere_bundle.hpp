#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "xray/grid.hpp"
#include "xray/surface.hpp"

namespace xray {

// Spatial grid x fiber angles over a surface, with everything the operators
// and the Liouville quadrature need precomputed per node.
class Bundle {
public:
    // Grid of n x n nodes on [-L, L]^2 (L = 0 means the surface radius) and
    // nth uniform fiber angles; nth must be even and >= 8.
    Bundle(const ConformalSurface& s, int n, int nth, double L = 0);

    const ConformalSurface& surface() const { return surf_; }
    const Grid2D& grid() const { return grid_; }
    int nth() const { return nth_; }
    std::size_t nodes() const { return grid_.size(); }
    double theta(int k) const { return kTwoPi * k / nth_; }

    // per node: lambda, grad lambda, e^{-lambda}, K, coverage, quadrature weight
    // (coverage * h^2 * e^{2 lambda}; the fiber factor 2 pi / nth is separate)
    std::vector<double> lam, l1, l2, el, K, cover, wq;
    std::vector<double> cos_t, sin_t;

    std::uint64_t hash() const;

private:
    ConformalSurface surf_;
    Grid2D grid_;
    int nth_;
};
using BundleP = std::shared_ptr<const Bundle>;
BundleP make_bundle(const ConformalSurface& s, int n, int nth, double L = 0);

// Signed frequency of FFT slot idx; the Nyquist slot reports +nth/2.
inline int slot_freq(int idx, int nth) { return idx <= nth / 2 ? idx : idx - nth; }
inline int freq_slot(int k, int nth) { return ((k % nth) + nth) % nth; }

// C^n-valued samples on SM; layout ((node * n + c) * nth + k).
class SMField {
public:
    SMField() = default;
    SMField(BundleP b, int n);

    const BundleP& bundle() const { return b_; }
    int channels() const { return n_; }
    int nth() const { return b_->nth(); }
    std::size_t index(std::size_t node, int c, int k) const { return (node * n_ + c) * b_->nth() + k; }
    cd& at(std::size_t node, int c, int k) { return v[index(node, c, k)]; }
    const cd& at(std::size_t node, int c, int k) const { return v[index(node, c, k)]; }

    std::vector<cd> v;
    bool boundary_vanishing = false;

    SMField& operator+=(const SMField& o);
    SMField& operator-=(const SMField& o);
    SMField& operator*=(cd s);

private:
    BundleP b_;
    int n_ = 1;
};
SMField operator+(SMField a, const SMField& b);
SMField operator-(SMField a, const SMField& b);
SMField operator*(cd s, SMField a);

// Fiber Fourier coefficients u_k(x) = (1/nth) sum_j u(x, theta_j) e^{-ik theta_j},
// same layout as SMField with k stored in FFT slot order.
class FourierModes {
public:
    FourierModes() = default;
    FourierModes(BundleP b, int n);

    const BundleP& bundle() const { return b_; }
    int channels() const { return n_; }
    int nth() const { return b_->nth(); }
    std::size_t index(std::size_t node, int c, int k) const {
        return (node * n_ + c) * b_->nth() + freq_slot(k, b_->nth());
    }
    cd& at(std::size_t node, int c, int k) { return coeffs[index(node, c, k)]; }
    const cd& at(std::size_t node, int c, int k) const { return coeffs[index(node, c, k)]; }

    // ||u_k||^2 = 2 pi sum_x wq |u_k(x)|^2
    double mode_norm2(int k) const;
    // m -> ||u_m||^2, m = 0..nth/2
    std::vector<double> degree_norms() const;
    // keep only frequencies with |k| == m (degree projection)
    FourierModes degree(int m) const;

    std::vector<cd> coeffs;

private:
    BundleP b_;
    int n_ = 1;
};

FourierModes fourier_modes(const SMField& u);
SMField synthesize(const FourierModes& m);

// Operators. Fibers are spectral; space uses 4th-order differences.
SMField apply_X(const SMField& u);
SMField apply_V(const SMField& u);
SMField apply_Xperp(const SMField& u);
// (VX - XV - X_perp) u; zero in the continuum for the X_perp used here.
SMField commutator_defect(const SMField& u);

// Raising/lowering pieces of X in mode space: a_k = eta_+ u_{k-1},
// b_k = eta_- u_{k+1}, so (Xu)_k = a_k + b_k.
struct EtaSplit {
    FourierModes a, b;
};
EtaSplit eta_split(const FourierModes& u);

// (X_- u, X_+ u) organised by degree: X_- lowers |k|, X_+ raises it.
std::pair<FourierModes, FourierModes> degree_split_X(const SMField& u);
std::pair<FourierModes, FourierModes> degree_split_X(const FourierModes& u);

cd l2_inner(const SMField& a, const SMField& b);
double l2_norm2(const SMField& a);
cd l2_inner(const FourierModes& a, const FourierModes& b);
double l2_norm2(const FourierModes& a);

enum class TestFieldKind { polynomial, trigonometric };

struct TestFieldOptions {
    TestFieldKind kind = TestFieldKind::polynomial;
    int spatial_order = 3;        // max total polynomial degree / trig frequency
    double cutoff_exponent = 2;   // factor ((R^2 - |x|^2)/R^2)_+^e
    bool real_valued = false;
};
// Random smooth boundary-vanishing field with fiber degrees from `degrees`.
SMField make_test_field(const BundleP& b, int n, std::uint64_t seed, const std::vector<int>& degrees,
                        const TestFieldOptions& opt = {});

// Binary snapshot: magic, N, N, nth, n, surface hash, then complex doubles.
void save_field(const SMField& u, const std::string& path);
SMField load_field(const BundleP& b, const std::string& path);
void save_degree_norms_csv(const FourierModes& m, const std::string& path);

}  // namespace xray
