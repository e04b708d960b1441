#pragma once

#include <memory>
#include <string>
#include <vector>

#include "xray/attenuation.hpp"
#include "xray/sphere_bundle.hpp"
#include "xray/transport.hpp"

namespace xray {

// Finite-degree source: modes f_k, |k| <= m, each a C^n field on grid nodes.
struct TensorSource {
    Grid2D grid;
    int n = 1, m = 0;
    std::vector<cd> c;  // ((k + m) * nodes + node) * n + ch

    TensorSource() = default;
    TensorSource(const Grid2D& g, int n_, int m_)
        : grid(g), n(n_), m(m_), c(static_cast<std::size_t>(2 * m_ + 1) * g.size() * n_, 0.0) {}
    std::size_t index(int k, std::size_t node, int ch) const {
        return (static_cast<std::size_t>(k + m) * grid.size() + node) * n + ch;
    }
    cd& at(int k, std::size_t node, int ch) { return c[index(k, node, ch)]; }
    const cd& at(int k, std::size_t node, int ch) const { return c[index(k, node, ch)]; }
};

// Modes |k| <= m of an SMField (ConfigError if the bundle grid cannot hold them).
TensorSource tensor_source(const SMField& f, int m);
SMField synthesize(const TensorSource& src, const BundleP& b);

// I_{A+Phi} f through transport::xray_transform on the synthesized field.
BoundaryFan forward(const ConformalSurface& s, const AttenuationPair* att, const TensorSource& src,
                    const FanSpec& fan, const TransportOptions& opt = {});

// The same discretization with per-sample ray kernels cached, plus its
// adjoint for the inner products
//   <a, b>_fan = sum w_fan a . conj(b),   <f, g>_src = sum_k sum_x 2 pi h^2 e^{2 lambda} f . conj(g).
class XrayOperator {
public:
    XrayOperator(const ConformalSurface& s, const AttenuationPair* att, const Grid2D& g, int n, int m,
                 const FanSpec& fan, const TransportOptions& opt = {});

    BoundaryFan forward(const TensorSource& f) const;
    TensorSource adjoint(const BoundaryFan& d) const;
    double fan_inner_real(const BoundaryFan& a, const BoundaryFan& b) const;
    cd fan_inner(const BoundaryFan& a, const BoundaryFan& b) const;
    cd src_inner(const TensorSource& a, const TensorSource& b) const;
    double fan_norm2(const BoundaryFan& a) const { return fan_inner(a, a).real(); }
    double src_norm2(const TensorSource& a) const { return src_inner(a, a).real(); }

    const Grid2D& grid() const { return grid_; }
    const FanSpec& fan() const { return fan_; }
    int channels() const { return n_; }
    int degree() const { return m_; }
    const std::vector<char>& unknowns() const { return mask_; }  // disc nodes reached by some stencil
    std::size_t cached_samples() const { return samples_.size(); }
    std::size_t cache_bytes() const;

private:
    struct Sample {
        float wx[4], wy[4];
        float theta;
        std::int32_t i0, j0;
    };
    Grid2D grid_;
    FanSpec fan_;
    int n_, m_;
    std::vector<Sample> samples_;
    std::vector<cd> G_;                 // n x n per sample
    std::vector<std::size_t> offset_;  // per fan node, into samples_
    std::vector<double> wfan_, wsrc_;
    std::vector<char> mask_;
};

struct CglsOptions {
    int iters = 200;
    double tol = 1e-10;  // on ||F* r|| / ||F* d||
    int divergence_window = 10;
};
struct CglsResult {
    TensorSource f;
    std::vector<double> residual;   // ||d - F f||_fan per iteration (index 0: initial)
    std::vector<double> normal;     // ||F*(d - F f)||_src per iteration
    int iterations = 0;
    bool converged = false, diverged = false;
    std::string message;
};
CglsResult cgls_reconstruct(const XrayOperator& op, const BoundaryFan& data, const CglsOptions& opt = {});

// Relative L2 error over the disc (quadrature coverage * h^2 * e^{2 lambda}).
double relative_error(const ConformalSurface& s, const TensorSource& f, const TensorSource& truth);
double source_norm2(const ConformalSurface& s, const TensorSource& f);

// Degree-1 kernel check: finds a degree-0 u vanishing outside the open disc
// that minimizes ||diff + (X + A + Phi)u|| over the disc.
struct KernelFit {
    std::vector<cd> u;           // node * n + ch
    TensorSource Lu;             // (X + A + Phi)u
    double residual = 0;         // ||diff + Lu||
    double diff_norm = 0;        // ||diff||
};
KernelFit fit_gauge_kernel(const ConformalSurface& s, const AttenuationPair* att, const TensorSource& diff);

// Scattering-rigidity probe: D = max node distance between C_A and C_B.
struct ScatteringProbe {
    double D = 0;
    double max_cond = 0;
    BoundaryFan CA, CB;
};
ScatteringProbe scattering_rigidity_probe(const ConformalSurface& s, const AttenuationPair& attA,
                                          const AttenuationPair& attB, const FanSpec& fan,
                                          const TransportOptions& opt = {});

void save_source(const TensorSource& f, const std::string& path);

}  // namespace xray
