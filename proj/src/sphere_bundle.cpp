#include "xray/sphere_bundle.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "xray/parallel.hpp"

namespace xray {

namespace {

// Eigen's FFT keeps a plan cache, so each worker owns one.
struct LineFFT {
    Eigen::FFT<double> fft;
    std::vector<cd> in, out;
    explicit LineFFT(int n) : in(n), out(n) {}
    // out = (1/N) sum in_j e^{-ik theta_j}
    void forward(const cd* src, cd* dst) {
        const int n = static_cast<int>(in.size());
        std::copy(src, src + n, in.begin());
        fft.fwd(out, in);
        for (int k = 0; k < n; ++k) dst[k] = out[k] / static_cast<double>(n);
    }
    // dst_j = sum_k src_k e^{ik theta_j}
    void inverse(const cd* src, cd* dst) {
        const int n = static_cast<int>(in.size());
        std::copy(src, src + n, in.begin());
        fft.inv(out, in);
        for (int k = 0; k < n; ++k) dst[k] = out[k] * static_cast<double>(n);
    }
};

}  // namespace

Bundle::Bundle(const ConformalSurface& s, int n, int nth, double L) : surf_(s), nth_(nth) {
    if (nth < 8 || nth % 2) throw ConfigError("fiber resolution must be even and at least 8");
    if (n < 9) throw ConfigError("spatial resolution must be at least 9 nodes per axis");
    grid_.n = n;
    grid_.L = L > 0 ? L : s.radius();
    if (grid_.L < s.radius() * (1 - 1e-12)) throw ConfigError("grid must cover the disc");
    const std::size_t N = grid_.size();
    lam.resize(N);
    l1.resize(N);
    l2.resize(N);
    el.resize(N);
    K.resize(N);
    wq.resize(N);
    cover = disc_coverage(grid_, s.radius());
    const double h = grid_.h();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            std::size_t p = grid_.idx(i, j);
            Jet l = s.lambda(grid_.x(i), grid_.x(j));
            lam[p] = l.v;
            l1[p] = l.d1;
            l2[p] = l.d2;
            el[p] = std::exp(-l.v);
            K[p] = s.curvature_unchecked(grid_.x(i), grid_.x(j));
            wq[p] = cover[p] * h * h * std::exp(2 * l.v);
        }
    cos_t.resize(nth);
    sin_t.resize(nth);
    for (int k = 0; k < nth; ++k) {
        cos_t[k] = std::cos(theta(k));
        sin_t[k] = std::sin(theta(k));
    }
}

std::uint64_t Bundle::hash() const {
    return fnv1a(surf_.describe() + ";n=" + std::to_string(grid_.n) + ";L=" + std::to_string(grid_.L) +
                 ";nth=" + std::to_string(nth_));
}

BundleP make_bundle(const ConformalSurface& s, int n, int nth, double L) {
    return std::make_shared<const Bundle>(s, n, nth, L);
}

SMField::SMField(BundleP b, int n) : v(b->nodes() * n * b->nth()), b_(std::move(b)), n_(n) {
    if (n < 1) throw ConfigError("channel count must be >= 1");
}

SMField& SMField::operator+=(const SMField& o) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
    boundary_vanishing = boundary_vanishing && o.boundary_vanishing;
    return *this;
}
SMField& SMField::operator-=(const SMField& o) {
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= o.v[i];
    boundary_vanishing = boundary_vanishing && o.boundary_vanishing;
    return *this;
}
SMField& SMField::operator*=(cd s) {
    for (auto& x : v) x *= s;
    return *this;
}
SMField operator+(SMField a, const SMField& b) { return a += b; }
SMField operator-(SMField a, const SMField& b) { return a -= b; }
SMField operator*(cd s, SMField a) { return a *= s; }

FourierModes::FourierModes(BundleP b, int n) : coeffs(b->nodes() * n * b->nth()), b_(std::move(b)), n_(n) {}

double FourierModes::mode_norm2(int k) const {
    const int nt = nth();
    const int slot = freq_slot(k, nt);
    double s = 0;
    for (std::size_t p = 0; p < b_->nodes(); ++p) {
        if (b_->wq[p] == 0) continue;
        double t = 0;
        for (int c = 0; c < n_; ++c) t += std::norm(coeffs[(p * n_ + c) * nt + slot]);
        s += b_->wq[p] * t;
    }
    return kTwoPi * s;
}

std::vector<double> FourierModes::degree_norms() const {
    const int nt = nth();
    std::vector<double> slot(nt, 0.0);
    for (std::size_t p = 0; p < b_->nodes(); ++p) {
        if (b_->wq[p] == 0) continue;
        for (int c = 0; c < n_; ++c)
            for (int k = 0; k < nt; ++k) slot[k] += b_->wq[p] * std::norm(coeffs[(p * n_ + c) * nt + k]);
    }
    std::vector<double> deg(nt / 2 + 1, 0.0);
    for (int k = 0; k < nt; ++k) deg[std::abs(slot_freq(k, nt))] += kTwoPi * slot[k];
    return deg;
}

FourierModes FourierModes::degree(int m) const {
    FourierModes r(b_, n_);
    const int nt = nth();
    for (std::size_t q = 0; q < b_->nodes() * n_; ++q)
        for (int k = 0; k < nt; ++k)
            if (std::abs(slot_freq(k, nt)) == m) r.coeffs[q * nt + k] = coeffs[q * nt + k];
    return r;
}

FourierModes fourier_modes(const SMField& u) {
    FourierModes m(u.bundle(), u.channels());
    const Grid2D& g = u.bundle()->grid();
    const int nt = u.nth(), n = u.channels();
    parallel_for(static_cast<std::size_t>(g.n), [&](std::size_t i) {
        LineFFT f(nt);
        for (int j = 0; j < g.n; ++j)
            for (int c = 0; c < n; ++c) {
                std::size_t off = u.index(g.idx(static_cast<int>(i), j), c, 0);
                f.forward(&u.v[off], &m.coeffs[off]);
            }
    });
    return m;
}

SMField synthesize(const FourierModes& m) {
    SMField u(m.bundle(), m.channels());
    const Grid2D& g = m.bundle()->grid();
    const int nt = m.nth(), n = m.channels();
    parallel_for(static_cast<std::size_t>(g.n), [&](std::size_t i) {
        LineFFT f(nt);
        for (int j = 0; j < g.n; ++j)
            for (int c = 0; c < n; ++c) {
                std::size_t off = u.index(g.idx(static_cast<int>(i), j), c, 0);
                f.inverse(&m.coeffs[off], &u.v[off]);
            }
    });
    return u;
}

SMField apply_V(const SMField& u) {
    SMField r(u.bundle(), u.channels());
    const Grid2D& g = u.bundle()->grid();
    const int nt = u.nth(), n = u.channels();
    parallel_for(static_cast<std::size_t>(g.n), [&](std::size_t i) {
        LineFFT f(nt);
        std::vector<cd> tmp(nt);
        for (int j = 0; j < g.n; ++j)
            for (int c = 0; c < n; ++c) {
                std::size_t off = u.index(g.idx(static_cast<int>(i), j), c, 0);
                f.forward(&u.v[off], tmp.data());
                for (int k = 0; k < nt; ++k) {
                    int kk = slot_freq(k, nt);
                    tmp[k] *= (k == nt / 2) ? cd(0) : cd(0, kk);
                }
                f.inverse(tmp.data(), &r.v[off]);
            }
    });
    r.boundary_vanishing = u.boundary_vanishing;
    return r;
}

namespace {

// e^{-lambda}(c1 d1 + c2 d2 + c3 dtheta) with fiber-dependent coefficients
// chosen by `perp`.
SMField horizontal(const SMField& u, bool perp) {
    const BundleP& b = u.bundle();
    const Grid2D& g = b->grid();
    const int nt = u.nth(), n = u.channels(), block = n * nt;
    std::vector<cd> D1(u.v.size()), D2(u.v.size());
    fd_axis(g, u.v.data(), D1.data(), block, 0);
    fd_axis(g, u.v.data(), D2.data(), block, 1);
    SMField Vu = apply_V(u);
    SMField r(b, n);
    parallel_for(b->nodes(), [&](std::size_t p) {
        const double e = b->el[p], a1 = b->l1[p], a2 = b->l2[p];
        for (int c = 0; c < n; ++c)
            for (int k = 0; k < nt; ++k) {
                const double cs = b->cos_t[k], sn = b->sin_t[k];
                std::size_t q = (p * n + c) * nt + k;
                if (!perp)
                    r.v[q] = e * (cs * D1[q] + sn * D2[q] + (-a1 * sn + a2 * cs) * Vu.v[q]);
                else
                    r.v[q] = e * (-sn * D1[q] + cs * D2[q] - (a1 * cs + a2 * sn) * Vu.v[q]);
            }
    });
    return r;
}

}  // namespace

SMField apply_X(const SMField& u) { return horizontal(u, false); }
SMField apply_Xperp(const SMField& u) { return horizontal(u, true); }

SMField commutator_defect(const SMField& u) {
    SMField r = apply_V(apply_X(u));
    r -= apply_X(apply_V(u));
    r -= apply_Xperp(u);
    return r;
}

EtaSplit eta_split(const FourierModes& u) {
    const BundleP& b = u.bundle();
    const Grid2D& g = b->grid();
    const int nt = u.nth(), n = u.channels(), block = n * nt;
    std::vector<cd> D1(u.coeffs.size()), D2(u.coeffs.size());
    fd_axis(g, u.coeffs.data(), D1.data(), block, 0);
    fd_axis(g, u.coeffs.data(), D2.data(), block, 1);
    EtaSplit s{FourierModes(b, n), FourierModes(b, n)};
    const cd I(0, 1);
    parallel_for(b->nodes(), [&](std::size_t p) {
        const double e = 0.5 * b->el[p], a1 = b->l1[p], a2 = b->l2[p];
        for (int c = 0; c < n; ++c) {
            const std::size_t base = (p * n + c) * nt;
            for (int k = 0; k < nt; ++k) {
                // a_k from slot k-1, b_k from slot k+1 (cyclic, as on the grid)
                int km = (k + nt - 1) % nt, kp = (k + 1) % nt;
                double fm = km == nt / 2 ? 0.0 : slot_freq(km, nt);
                double fp = kp == nt / 2 ? 0.0 : slot_freq(kp, nt);
                cd um = u.coeffs[base + km], up = u.coeffs[base + kp];
                s.a.coeffs[base + k] = e * ((D1[base + km] - I * D2[base + km]) - fm * cd(a1, -a2) * um);
                s.b.coeffs[base + k] = e * ((D1[base + kp] + I * D2[base + kp]) + fp * cd(a1, a2) * up);
            }
        }
    });
    return s;
}

std::pair<FourierModes, FourierModes> degree_split_X(const FourierModes& u) {
    EtaSplit s = eta_split(u);
    const BundleP& b = u.bundle();
    const int nt = u.nth(), n = u.channels();
    FourierModes lo(b, n), hi(b, n);
    for (std::size_t q = 0; q < b->nodes() * n; ++q)
        for (int k = 0; k < nt; ++k) {
            std::size_t i = q * nt + k;
            int f = slot_freq(k, nt);
            if (f > 0) {
                lo.coeffs[i] = s.b.coeffs[i];
                hi.coeffs[i] = s.a.coeffs[i];
            } else if (f < 0) {
                lo.coeffs[i] = s.a.coeffs[i];
                hi.coeffs[i] = s.b.coeffs[i];
            } else {
                lo.coeffs[i] = s.a.coeffs[i] + s.b.coeffs[i];
            }
        }
    return {std::move(lo), std::move(hi)};
}

std::pair<FourierModes, FourierModes> degree_split_X(const SMField& u) { return degree_split_X(fourier_modes(u)); }

cd l2_inner(const SMField& a, const SMField& b) {
    const BundleP& B = a.bundle();
    const int nt = a.nth(), n = a.channels();
    cd s = 0;
    for (std::size_t p = 0; p < B->nodes(); ++p) {
        if (B->wq[p] == 0) continue;
        cd t = 0;
        for (int q = 0; q < n * nt; ++q) t += a.v[p * n * nt + q] * std::conj(b.v[p * n * nt + q]);
        s += B->wq[p] * t;
    }
    return s * (kTwoPi / nt);
}

double l2_norm2(const SMField& a) { return l2_inner(a, a).real(); }

cd l2_inner(const FourierModes& a, const FourierModes& b) {
    const BundleP& B = a.bundle();
    const int nt = a.nth(), n = a.channels();
    cd s = 0;
    for (std::size_t p = 0; p < B->nodes(); ++p) {
        if (B->wq[p] == 0) continue;
        cd t = 0;
        for (int q = 0; q < n * nt; ++q) t += a.coeffs[p * n * nt + q] * std::conj(b.coeffs[p * n * nt + q]);
        s += B->wq[p] * t;
    }
    return s * kTwoPi;
}

double l2_norm2(const FourierModes& a) { return l2_inner(a, a).real(); }

SMField make_test_field(const BundleP& b, int n, std::uint64_t seed, const std::vector<int>& degrees,
                        const TestFieldOptions& opt) {
    const Grid2D& g = b->grid();
    const int nt = b->nth();
    const double R = b->surface().radius();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N01;
    FourierModes m(b, n);
    const int P = opt.spatial_order;

    auto spatial = [&](std::vector<cd>& coef) {
        coef.clear();
        if (opt.kind == TestFieldKind::polynomial) {
            for (int p = 0; p <= P; ++p)
                for (int q = 0; p + q <= P; ++q) coef.push_back(cd(N01(rng), N01(rng)) / (1.0 + p + q));
        } else {
            for (int p = -P; p <= P; ++p)
                for (int q = -P; q <= P; ++q)
                    coef.push_back(cd(N01(rng), N01(rng)) / (1.0 + std::abs(p) + std::abs(q)));
        }
    };
    auto eval = [&](const std::vector<cd>& coef, double x1, double x2) {
        cd s = 0;
        std::size_t t = 0;
        double y1 = x1 / R, y2 = x2 / R;
        if (opt.kind == TestFieldKind::polynomial) {
            for (int p = 0; p <= P; ++p)
                for (int q = 0; p + q <= P; ++q) s += coef[t++] * std::pow(y1, p) * std::pow(y2, q);
        } else {
            for (int p = -P; p <= P; ++p)
                for (int q = -P; q <= P; ++q) s += coef[t++] * std::exp(cd(0, 0.5 * kPi * (p * y1 + q * y2)));
        }
        return s;
    };

    std::vector<cd> coef;
    for (int d : degrees) {
        if (d < 0 || d >= nt / 2) throw ConfigError("test field degree out of range for fiber resolution");
        for (int c = 0; c < n; ++c) {
            std::vector<int> ks = d == 0 ? std::vector<int>{0} : std::vector<int>{d, -d};
            for (int k : ks) {
                if (opt.real_valued && k < 0) continue;
                spatial(coef);
                for (int i = 0; i < g.n; ++i)
                    for (int j = 0; j < g.n; ++j) {
                        double x1 = g.x(i), x2 = g.x(j);
                        double q = (R * R - x1 * x1 - x2 * x2) / (R * R);
                        if (q <= 0) continue;
                        cd w = eval(coef, x1, x2) * std::pow(q, opt.cutoff_exponent);
                        std::size_t p = g.idx(i, j);
                        if (opt.real_valued) {
                            if (k == 0) m.at(p, c, 0) += w.real();
                            else {
                                m.at(p, c, k) += w;
                                m.at(p, c, -k) += std::conj(w);
                            }
                        } else {
                            m.at(p, c, k) += w;
                        }
                    }
            }
        }
    }
    double nrm = std::sqrt(l2_norm2(m));
    if (nrm > 0)
        for (auto& x : m.coeffs) x /= nrm;
    SMField u = synthesize(m);
    if (opt.real_valued)
        for (auto& x : u.v) x = x.real();
    u.boundary_vanishing = true;
    return u;
}

void save_field(const SMField& u, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot write " + path);
    const char magic[4] = {'X', 'R', 'F', '1'};
    os.write(magic, 4);
    std::int32_t hdr[4] = {u.bundle()->grid().n, u.bundle()->grid().n, u.nth(), u.channels()};
    os.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
    std::uint64_t h = u.bundle()->surface().hash();
    os.write(reinterpret_cast<const char*>(&h), sizeof h);
    os.write(reinterpret_cast<const char*>(u.v.data()), static_cast<std::streamsize>(u.v.size() * sizeof(cd)));
}

SMField load_field(const BundleP& b, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot read " + path);
    char magic[4];
    is.read(magic, 4);
    if (std::memcmp(magic, "XRF1", 4) != 0) throw ConfigError(path + ": not a field snapshot");
    std::int32_t hdr[4];
    is.read(reinterpret_cast<char*>(hdr), sizeof hdr);
    std::uint64_t h;
    is.read(reinterpret_cast<char*>(&h), sizeof h);
    if (hdr[0] != b->grid().n || hdr[1] != b->grid().n || hdr[2] != b->nth())
        throw ConfigError(path + ": grid does not match");
    if (h != b->surface().hash()) throw ConfigError(path + ": surface hash does not match");
    SMField u(b, hdr[3]);
    is.read(reinterpret_cast<char*>(u.v.data()), static_cast<std::streamsize>(u.v.size() * sizeof(cd)));
    if (!is) throw ConfigError(path + ": truncated");
    return u;
}

void save_degree_norms_csv(const FourierModes& m, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path);
    os.precision(17);
    os << "m,norm2\n";
    auto d = m.degree_norms();
    for (std::size_t i = 0; i < d.size(); ++i) os << i << "," << d[i] << "\n";
}

}  // namespace xray
