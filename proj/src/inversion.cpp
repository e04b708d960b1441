#include "xray/inversion.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "xray/parallel.hpp"

namespace xray {

namespace {

int fiber_size(int m) {
    int nt = 8;
    while (nt < 2 * m + 4) nt *= 2;
    return nt;
}

std::vector<double> disc_weights(const ConformalSurface& s, const Grid2D& g) {
    std::vector<double> cov = disc_coverage(g, s.radius()), w(g.size(), 0.0);
    const double h2 = g.h() * g.h();
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j) {
            std::size_t p = g.idx(i, j);
            if (cov[p] > 0) w[p] = cov[p] * h2 * std::exp(2 * s.lambda(g.x(i), g.x(j)).v);
        }
    return w;
}

// Rays are grouped into this many blocks for the adjoint so the reduction
// order does not depend on the worker count.
constexpr std::size_t kAdjointBlocks = 16;

}  // namespace

TensorSource tensor_source(const SMField& f, int m) {
    const Bundle& b = *f.bundle();
    if (2 * m + 1 >= b.nth()) throw ConfigError("tensor_source: fiber grid too coarse for degree m");
    FourierModes M = fourier_modes(f);
    TensorSource src(b.grid(), f.channels(), m);
    for (int k = -m; k <= m; ++k)
        for (std::size_t p = 0; p < b.nodes(); ++p)
            for (int c = 0; c < src.n; ++c) src.at(k, p, c) = M.at(p, c, k);
    return src;
}

SMField synthesize(const TensorSource& src, const BundleP& b) {
    if (!same_grid(b->grid(), src.grid)) throw ConfigError("synthesize: bundle grid differs from the source grid");
    if (2 * src.m + 1 >= b->nth()) throw ConfigError("synthesize: fiber grid too coarse for degree m");
    FourierModes M(b, src.n);
    for (int k = -src.m; k <= src.m; ++k)
        for (std::size_t p = 0; p < b->nodes(); ++p)
            for (int c = 0; c < src.n; ++c) M.at(p, c, k) = src.at(k, p, c);
    return synthesize(M);
}

BoundaryFan forward(const ConformalSurface& s, const AttenuationPair* att, const TensorSource& src,
                    const FanSpec& fan, const TransportOptions& opt) {
    BundleP b = make_bundle(s, src.grid.n, fiber_size(src.m), src.grid.L);
    return xray_transform(s, att, synthesize(src, b), fan, opt);
}

XrayOperator::XrayOperator(const ConformalSurface& s, const AttenuationPair* att, const Grid2D& g, int n, int m,
                           const FanSpec& fan, const TransportOptions& opt)
    : grid_(g), fan_(fan), n_(n), m_(m) {
    if (att && att->n != n) throw ConfigError("attenuation and source channel counts differ");
    if (m < 0) throw ConfigError("degree must be nonnegative");
    const std::size_t rays = static_cast<std::size_t>(fan.n_beta) * fan.n_alpha;
    MatrixFn M = att ? attenuation_fn(*att) : MatrixFn{};
    std::vector<std::vector<Sample>> smp(rays);
    std::vector<std::vector<cd>> ker(rays);
    parallel_for(rays, [&](std::size_t q) {
        int ib = static_cast<int>(q / fan.n_alpha), ia = static_cast<int>(q % fan.n_alpha);
        Ray r = sample_ray(s, fan_point_plus(s.radius(), fan.beta(ib), fan.alpha(ib, ia)), opt.h);
        RayStates rs = ray_states(s, r);
        std::vector<cd> G = ray_kernel(rs, n, M);
        for (std::size_t p = 0; p < rs.pts.size(); ++p) {
            Stencil st;
            if (!make_stencil(g, rs.pts[p][0], rs.pts[p][1], st)) continue;
            Sample sm;
            for (int a = 0; a < 4; ++a) {
                sm.wx[a] = static_cast<float>(st.wx[a]);
                sm.wy[a] = static_cast<float>(st.wy[a]);
            }
            sm.theta = static_cast<float>(rs.theta[p]);
            sm.i0 = st.i0;
            sm.j0 = st.j0;
            smp[q].push_back(sm);
            ker[q].insert(ker[q].end(), G.begin() + p * n * n, G.begin() + (p + 1) * n * n);
        }
    });
    offset_.assign(rays + 1, 0);
    for (std::size_t q = 0; q < rays; ++q) offset_[q + 1] = offset_[q] + smp[q].size();
    samples_.reserve(offset_[rays]);
    G_.reserve(offset_[rays] * n * n);
    for (std::size_t q = 0; q < rays; ++q) {
        samples_.insert(samples_.end(), smp[q].begin(), smp[q].end());
        G_.insert(G_.end(), ker[q].begin(), ker[q].end());
        std::vector<Sample>().swap(smp[q]);
        std::vector<cd>().swap(ker[q]);
    }

    wfan_.resize(rays);
    for (std::size_t q = 0; q < rays; ++q)
        wfan_[q] = fan_weight(s, fan, static_cast<int>(q / fan.n_alpha), static_cast<int>(q % fan.n_alpha));
    mask_.assign(g.size(), 0);
    for (const auto& sm : samples_)
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b)
                if (sm.wx[a] != 0 && sm.wy[b] != 0) mask_[g.idx(sm.i0 + a, sm.j0 + b)] = 1;
    // sources live on the closed disc; nodes outside it are held at zero
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j)
            if (!s.contains(g.x(i), g.x(j))) mask_[g.idx(i, j)] = 0;
    wsrc_.assign(g.size(), 0.0);
    const double h2 = g.h() * g.h();
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j) {
            std::size_t p = g.idx(i, j);
            if (mask_[p]) wsrc_[p] = kTwoPi * h2 * std::exp(2 * s.lambda(g.x(i), g.x(j)).v);
        }
}

std::size_t XrayOperator::cache_bytes() const {
    return samples_.size() * sizeof(Sample) + G_.size() * sizeof(cd) + offset_.size() * sizeof(std::size_t);
}

BoundaryFan XrayOperator::forward(const TensorSource& f) const {
    if (!same_grid(f.grid, grid_) || f.n != n_ || f.m != m_) throw ConfigError("forward: source shape mismatch");
    BoundaryFan out(fan_, n_, 1);
    const int n = n_, m = m_;
    parallel_for(out.nodes(), [&](std::size_t q) {
        std::vector<cd> fp(n), u(n, 0.0), e(2 * m + 1);
        for (std::size_t s = offset_[q]; s < offset_[q + 1]; ++s) {
            const Sample& sm = samples_[s];
            for (int k = -m; k <= m; ++k) e[k + m] = std::exp(cd(0, k * double(sm.theta)));
            std::fill(fp.begin(), fp.end(), 0.0);
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b) {
                    double w = double(sm.wx[a]) * double(sm.wy[b]);
                    std::size_t node = grid_.idx(sm.i0 + a, sm.j0 + b);
                    if (!mask_[node]) continue;
                    for (int k = -m; k <= m; ++k) {
                        cd we = w * e[k + m];
                        for (int c = 0; c < n; ++c) fp[c] += we * f.at(k, node, c);
                    }
                }
            const cd* G = &G_[s * n * n];
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c) u[r] += G[r * n + c] * fp[c];
        }
        std::copy(u.begin(), u.end(), out.at(static_cast<int>(q / fan_.n_alpha), static_cast<int>(q % fan_.n_alpha)));
    });
    return out;
}

TensorSource XrayOperator::adjoint(const BoundaryFan& d) const {
    if (d.rows != n_ || d.cols != 1 || d.nodes() != wfan_.size()) throw ConfigError("adjoint: fan shape mismatch");
    const int n = n_, m = m_;
    const std::size_t rays = wfan_.size();
    const std::size_t nb = std::min(kAdjointBlocks, rays);
    std::vector<TensorSource> part(nb, TensorSource(grid_, n, m));
    parallel_for(nb, [&](std::size_t blk) {
        TensorSource& acc = part[blk];
        std::size_t lo = blk * rays / nb, hi = (blk + 1) * rays / nb;
        std::vector<cd> y(n), e(2 * m + 1);
        for (std::size_t q = lo; q < hi; ++q) {
            const cd* g = &d.values[q * n];
            for (std::size_t s = offset_[q]; s < offset_[q + 1]; ++s) {
                const Sample& sm = samples_[s];
                const cd* G = &G_[s * n * n];
                // y = w G^* g
                for (int c = 0; c < n; ++c) {
                    cd t = 0;
                    for (int r = 0; r < n; ++r) t += std::conj(G[r * n + c]) * g[r];
                    y[c] = wfan_[q] * t;
                }
                for (int k = -m; k <= m; ++k) e[k + m] = std::exp(cd(0, -k * double(sm.theta)));
                for (int a = 0; a < 4; ++a)
                    for (int b = 0; b < 4; ++b) {
                        double w = double(sm.wx[a]) * double(sm.wy[b]);
                        std::size_t node = grid_.idx(sm.i0 + a, sm.j0 + b);
                        for (int k = -m; k <= m; ++k) {
                            cd we = w * e[k + m];
                            for (int c = 0; c < n; ++c) acc.at(k, node, c) += we * y[c];
                        }
                    }
            }
        }
    });
    TensorSource out(grid_, n, m);
    for (const auto& p : part)
        for (std::size_t i = 0; i < out.c.size(); ++i) out.c[i] += p.c[i];
    for (int k = -m; k <= m; ++k)
        for (std::size_t p = 0; p < grid_.size(); ++p)
            for (int c = 0; c < n; ++c) out.at(k, p, c) = mask_[p] ? out.at(k, p, c) / wsrc_[p] : 0.0;
    return out;
}

cd XrayOperator::fan_inner(const BoundaryFan& a, const BoundaryFan& b) const {
    cd s = 0;
    const std::size_t blk = static_cast<std::size_t>(a.rows) * a.cols;
    for (std::size_t q = 0; q < wfan_.size(); ++q) {
        cd t = 0;
        for (std::size_t e = 0; e < blk; ++e) t += a.values[q * blk + e] * std::conj(b.values[q * blk + e]);
        s += wfan_[q] * t;
    }
    return s;
}

double XrayOperator::fan_inner_real(const BoundaryFan& a, const BoundaryFan& b) const {
    return fan_inner(a, b).real();
}

cd XrayOperator::src_inner(const TensorSource& a, const TensorSource& b) const {
    cd s = 0;
    for (int k = -m_; k <= m_; ++k)
        for (std::size_t p = 0; p < grid_.size(); ++p) {
            if (!mask_[p]) continue;
            cd t = 0;
            for (int c = 0; c < n_; ++c) t += a.at(k, p, c) * std::conj(b.at(k, p, c));
            s += wsrc_[p] * t;
        }
    return s;
}

CglsResult cgls_reconstruct(const XrayOperator& op, const BoundaryFan& data, const CglsOptions& opt) {
    CglsResult res;
    res.f = TensorSource(op.grid(), op.channels(), op.degree());
    BoundaryFan r = data;
    TensorSource s = op.adjoint(r), p = s;
    double gamma = op.src_norm2(s);
    const double s0 = std::sqrt(gamma);
    res.residual.push_back(std::sqrt(op.fan_norm2(r)));
    res.normal.push_back(s0);
    if (s0 == 0) {
        res.converged = true;
        res.message = "zero normal residual";
        return res;
    }
    for (int it = 1; it <= opt.iters; ++it) {
        BoundaryFan q = op.forward(p);
        double qq = op.fan_norm2(q);
        if (qq == 0) break;
        double alpha = gamma / qq;
        for (std::size_t i = 0; i < res.f.c.size(); ++i) res.f.c[i] += alpha * p.c[i];
        for (std::size_t i = 0; i < r.values.size(); ++i) r.values[i] -= alpha * q.values[i];
        s = op.adjoint(r);
        double gnew = op.src_norm2(s);
        for (std::size_t i = 0; i < p.c.size(); ++i) p.c[i] = s.c[i] + (gnew / gamma) * p.c[i];
        gamma = gnew;
        res.iterations = it;
        res.residual.push_back(std::sqrt(op.fan_norm2(r)));
        res.normal.push_back(std::sqrt(gamma));
        const int w = opt.divergence_window;
        if (it >= w && res.residual[it] > res.residual[it - w]) {
            res.diverged = true;
            res.message = "residual increased over " + std::to_string(w) + " iterations";
            return res;
        }
        if (std::sqrt(gamma) <= opt.tol * s0) {
            res.converged = true;
            res.message = "normal residual below tolerance";
            return res;
        }
    }
    res.message = "iteration limit";
    return res;
}

double source_norm2(const ConformalSurface& s, const TensorSource& f) {
    std::vector<double> w = disc_weights(s, f.grid);
    double t = 0;
    for (int k = -f.m; k <= f.m; ++k)
        for (std::size_t p = 0; p < f.grid.size(); ++p)
            for (int c = 0; c < f.n; ++c) t += w[p] * std::norm(f.at(k, p, c));
    return kTwoPi * t;
}

double relative_error(const ConformalSurface& s, const TensorSource& f, const TensorSource& truth) {
    if (f.c.size() != truth.c.size()) throw ConfigError("relative_error: shape mismatch");
    TensorSource d = f;
    for (std::size_t i = 0; i < d.c.size(); ++i) d.c[i] -= truth.c[i];
    double nt = source_norm2(s, truth);
    return nt > 0 ? std::sqrt(source_norm2(s, d) / nt) : std::sqrt(source_norm2(s, d));
}

KernelFit fit_gauge_kernel(const ConformalSurface& s, const AttenuationPair* att, const TensorSource& diff) {
    if (diff.m != 1) throw ConfigError("fit_gauge_kernel expects a degree-1 source");
    const Grid2D& g = diff.grid;
    const int n = diff.n;
    if (att && (!same_grid(att->grid, g) || att->n != n)) throw ConfigError("attenuation does not match the source");
    const double R = s.radius();
    std::vector<double> w = disc_weights(s, g);
    std::vector<double> el(g.size());
    std::vector<long> col(g.size(), -1);
    long ncols = 0;
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j) {
            std::size_t p = g.idx(i, j);
            el[p] = std::exp(-s.lambda(g.x(i), g.x(j)).v);
            if (g.x(i) * g.x(i) + g.x(j) * g.x(j) < R * R * (1 - 1e-12)) col[p] = ncols++;
        }
    // rows (k, node, ch) for nodes with positive weight
    std::vector<long> row(g.size(), -1);
    long nrows_node = 0;
    for (std::size_t p = 0; p < g.size(); ++p)
        if (w[p] > 0) row[p] = nrows_node++;
    auto R_ = [&](int k, std::size_t p, int c) { return ((k + 1) * nrows_node + row[p]) * n + c; };
    auto C_ = [&](std::size_t p, int c) { return col[p] * n + c; };

    using T = Eigen::Triplet<cd>;
    std::vector<T> trip;
    const cd I(0, 1);
    // derivative matrices by probing fd_axis with one node in every 5 along the axis
    for (int axis = 0; axis < 2; ++axis)
        for (int a = 0; a < 5; ++a) {
            std::vector<double> e(g.size(), 0.0), d(g.size(), 0.0);
            for (int i = 0; i < g.n; ++i)
                for (int j = 0; j < g.n; ++j)
                    if ((axis == 0 ? i : j) % 5 == a) e[g.idx(i, j)] = 1;
            fd_axis(g, e.data(), d.data(), 1, axis);
            for (int i = 0; i < g.n; ++i)
                for (int j = 0; j < g.n; ++j) {
                    std::size_t p = g.idx(i, j);
                    if (row[p] < 0 || d[p] == 0) continue;
                    int t = axis == 0 ? i : j;
                    int lo = std::clamp(t - 2, 0, g.n - 5);
                    int src = lo + ((a - lo) % 5 + 5) % 5;
                    std::size_t q = axis == 0 ? g.idx(src, j) : g.idx(i, src);
                    if (col[q] < 0) continue;
                    for (int sg : {-1, 1}) {
                        // k = sg: e^{-lambda}/2 (d1 - sg i d2)
                        cd v = 0.5 * el[p] * d[p] * (axis == 0 ? cd(1) : -double(sg) * I);
                        for (int c = 0; c < n; ++c) trip.emplace_back(R_(sg, p, c), C_(q, c), v);
                    }
                }
        }
    if (att) {
        for (std::size_t p = 0; p < g.size(); ++p) {
            if (row[p] < 0 || col[p] < 0) continue;
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c) {
                    cd a1 = att->a1(p)[r * n + c], a2 = att->a2(p)[r * n + c], ph = att->phi(p)[r * n + c];
                    trip.emplace_back(R_(1, p, r), C_(p, c), 0.5 * el[p] * (a1 - I * a2));
                    trip.emplace_back(R_(-1, p, r), C_(p, c), 0.5 * el[p] * (a1 + I * a2));
                    trip.emplace_back(R_(0, p, r), C_(p, c), ph);
                }
        }
    }
    const long nrows = 3 * nrows_node * n, nc = ncols * n;
    Eigen::SparseMatrix<cd> L(nrows, nc);
    L.setFromTriplets(trip.begin(), trip.end());
    Eigen::VectorXcd W(nrows), rhs(nrows);
    for (std::size_t p = 0; p < g.size(); ++p) {
        if (row[p] < 0) continue;
        for (int k = -1; k <= 1; ++k)
            for (int c = 0; c < n; ++c) {
                W(R_(k, p, c)) = std::sqrt(kTwoPi * w[p]);
                rhs(R_(k, p, c)) = -diff.at(k, p, c);
            }
    }
    Eigen::SparseMatrix<cd> WL = W.asDiagonal() * L;
    Eigen::SparseMatrix<cd> N = WL.adjoint() * WL;
    Eigen::VectorXcd b = WL.adjoint() * (W.asDiagonal() * rhs);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<cd>> solver(N);
    if (solver.info() != Eigen::Success) throw GeometryError("fit_gauge_kernel: normal matrix factorization failed");
    Eigen::VectorXcd u = solver.solve(b);
    Eigen::VectorXcd Lu = L * u;

    KernelFit out;
    out.u.assign(g.size() * n, 0.0);
    for (std::size_t p = 0; p < g.size(); ++p)
        if (col[p] >= 0)
            for (int c = 0; c < n; ++c) out.u[p * n + c] = u(C_(p, c));
    out.Lu = TensorSource(g, n, 1);
    for (std::size_t p = 0; p < g.size(); ++p)
        if (row[p] >= 0)
            for (int k = -1; k <= 1; ++k)
                for (int c = 0; c < n; ++c) out.Lu.at(k, p, c) = Lu(R_(k, p, c));
    TensorSource res = diff;
    for (std::size_t i = 0; i < res.c.size(); ++i) res.c[i] += out.Lu.c[i];
    out.residual = std::sqrt(source_norm2(s, res));
    out.diff_norm = std::sqrt(source_norm2(s, diff));
    return out;
}

ScatteringProbe scattering_rigidity_probe(const ConformalSurface& s, const AttenuationPair& attA,
                                          const AttenuationPair& attB, const FanSpec& fan,
                                          const TransportOptions& opt) {
    if (attA.n != attB.n) throw ConfigError("scattering probe: channel counts differ");
    ScatteringProbe pr;
    pr.CA = scattering_data(s, &attA, fan, opt);
    pr.CB = scattering_data(s, &attB, fan, opt);
    pr.D = max_node_distance(pr.CA, pr.CB);
    for (double c : pr.CA.cond) pr.max_cond = std::max(pr.max_cond, c);
    for (double c : pr.CB.cond) pr.max_cond = std::max(pr.max_cond, c);
    return pr;
}

void save_source(const TensorSource& f, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot write " + path);
    const char magic[4] = {'X', 'R', 'S', '1'};
    os.write(magic, 4);
    std::int32_t hdr[3] = {f.grid.n, f.n, f.m};
    os.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
    os.write(reinterpret_cast<const char*>(&f.grid.L), sizeof f.grid.L);
    os.write(reinterpret_cast<const char*>(f.c.data()), static_cast<std::streamsize>(f.c.size() * sizeof(cd)));
}

}  // namespace xray
