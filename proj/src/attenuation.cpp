#include "xray/attenuation.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>

namespace xray {

namespace {

using Mat = Eigen::MatrixXcd;

Mat load(const cd* p, int n) {
    Mat m(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) m(r, c) = p[r * n + c];
    return m;
}

void store(const Mat& m, cd* p) {
    const int n = static_cast<int>(m.rows());
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) p[r * n + c] = m(r, c);
}

double opnorm(const cd* p, int n) {
    if (n == 1) return std::abs(p[0]);
    Eigen::JacobiSVD<Mat> svd(load(p, n));
    return svd.singularValues()(0);
}

bool inside(const Grid2D& g, int i, int j, double R) {
    if (R <= 0) return true;
    double x1 = g.x(i), x2 = g.x(j);
    return x1 * x1 + x2 * x2 <= R * R * (1 + 1e-12);
}

// entries: sum_{p+q<=order} c_pq (x1/R)^p (x2/R)^q
std::vector<cd> random_matrix_field(const Grid2D& g, int n, double R, int order, std::mt19937_64& rng) {
    std::normal_distribution<double> N01;
    std::vector<cd> out(g.size() * n * n);
    for (int e = 0; e < n * n; ++e) {
        std::vector<cd> c;
        for (int p = 0; p <= order; ++p)
            for (int q = 0; p + q <= order; ++q) c.push_back(cd(N01(rng), N01(rng)) / (1.0 + p + q));
        for (int i = 0; i < g.n; ++i)
            for (int j = 0; j < g.n; ++j) {
                double y1 = g.x(i) / R, y2 = g.x(j) / R;
                cd s = 0;
                std::size_t t = 0;
                for (int p = 0; p <= order; ++p)
                    for (int q = 0; p + q <= order; ++q) s += c[t++] * std::pow(y1, p) * std::pow(y2, q);
                out[g.idx(i, j) * n * n + e] = s;
            }
    }
    return out;
}

double sup_opnorm(const Grid2D& g, const std::vector<cd>& f, int n, double R) {
    double s = 0;
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j)
            if (inside(g, i, j, R)) s = std::max(s, opnorm(&f[g.idx(i, j) * n * n], n));
    return s;
}

}  // namespace

AttenuationPair AttenuationPair::zero(const Grid2D& g, int n) {
    AttenuationPair a;
    a.grid = g;
    a.n = n;
    a.A1.assign(g.size() * n * n, 0.0);
    a.A2 = a.A1;
    a.Phi = a.A1;
    return a;
}

void AttenuationPair::eval(double x1, double x2, cd* o1, cd* o2, cd* op) const {
    const std::size_t m = nn();
    Stencil st;
    if (!make_stencil(grid, x1, x2, st)) {
        for (std::size_t e = 0; e < m; ++e) o1[e] = o2[e] = op[e] = 0;
        return;
    }
    for (std::size_t e = 0; e < m; ++e) {
        o1[e] = interpolate(grid, st, A1.data(), static_cast<int>(m), static_cast<int>(e));
        o2[e] = interpolate(grid, st, A2.data(), static_cast<int>(m), static_cast<int>(e));
        op[e] = interpolate(grid, st, Phi.data(), static_cast<int>(m), static_cast<int>(e));
    }
}

double AttenuationPair::skew_defect(double R) const {
    double d = 0;
    for (int i = 0; i < grid.n; ++i)
        for (int j = 0; j < grid.n; ++j) {
            if (!inside(grid, i, j, R)) continue;
            std::size_t p = grid.idx(i, j);
            for (const auto* A : {&A1, &A2}) {
                Mat m = load(&(*A)[p * nn()], n);
                Mat s = m + m.adjoint();
                d = std::max(d, s.norm());
            }
        }
    return d;
}

double AttenuationPair::sup_norm_A(double R) const {
    return std::max(sup_opnorm(grid, A1, n, R), sup_opnorm(grid, A2, n, R));
}

double AttenuationPair::sup_norm_Phi(double R) const { return sup_opnorm(grid, Phi, n, R); }

AttenuationPair random_attenuation(const Grid2D& g, int n, double R, std::uint64_t seed,
                                   const AttenuationOptions& opt) {
    std::mt19937_64 rng(seed);
    AttenuationPair a = AttenuationPair::zero(g, n);
    a.A1 = random_matrix_field(g, n, R, opt.order, rng);
    a.A2 = random_matrix_field(g, n, R, opt.order, rng);
    a.Phi = random_matrix_field(g, n, R, opt.order, rng);
    if (opt.unitary) {
        for (auto* A : {&a.A1, &a.A2})
            for (std::size_t p = 0; p < g.size(); ++p) {
                Mat m = load(&(*A)[p * n * n], n);
                store(0.5 * (m - m.adjoint()), &(*A)[p * n * n]);
            }
    }
    double sa = a.sup_norm_A(R), sp = a.sup_norm_Phi(R);
    for (auto* A : {&a.A1, &a.A2})
        for (auto& x : *A) x *= sa > 0 ? opt.a_scale / sa : 0.0;
    for (auto& x : a.Phi) x *= sp > 0 ? opt.phi_scale / sp : 0.0;
    return a;
}

AttenuationPair constant_higgs(const Grid2D& g, int n, cd c) {
    AttenuationPair a = AttenuationPair::zero(g, n);
    for (std::size_t p = 0; p < g.size(); ++p)
        for (int r = 0; r < n; ++r) a.Phi[p * n * n + r * n + r] = c;
    return a;
}

std::vector<cd> random_gauge(const Grid2D& g, int n, double rho, double amplitude, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<cd> M = random_matrix_field(g, n, rho, 2, rng);
    double s = sup_opnorm(g, M, n, rho);
    std::vector<cd> Q(M.size());
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j) {
            double r2 = (g.x(i) * g.x(i) + g.x(j) * g.x(j)) / (rho * rho);
            double psi = r2 < 1 ? std::pow(1 - r2, 6) : 0.0;
            std::size_t p = g.idx(i, j);
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c)
                    Q[p * n * n + r * n + c] = (r == c ? 1.0 : 0.0) + psi * amplitude / s * M[p * n * n + r * n + c];
        }
    return Q;
}

AttenuationPair gauge_transform(const AttenuationPair& att, const std::vector<cd>& Q) {
    const Grid2D& g = att.grid;
    const int n = att.n;
    const std::size_t nn = att.nn();
    if (Q.size() != g.size() * nn) throw ConfigError("gauge field does not match attenuation grid");
    double min_det = 1e300, ring = 0;
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j) {
            std::size_t p = g.idx(i, j);
            Mat q = load(&Q[p * nn], n);
            min_det = std::min(min_det, std::abs(q.determinant()));
            if (i == 0 || j == 0 || i == g.n - 1 || j == g.n - 1)
                ring = std::max(ring, (q - Mat::Identity(n, n)).cwiseAbs().maxCoeff());
        }
    if (min_det <= 1e-8) throw ConfigError("gauge: Q is not invertible everywhere");
    if (ring > 1e-10) throw ConfigError("gauge: Q must equal Id on the outermost ring");
    std::vector<cd> d1(Q.size()), d2(Q.size());
    fd_axis(g, Q.data(), d1.data(), static_cast<int>(nn), 0);
    fd_axis(g, Q.data(), d2.data(), static_cast<int>(nn), 1);
    AttenuationPair b = AttenuationPair::zero(g, n);
    b.support_margin = att.support_margin;
    for (std::size_t p = 0; p < g.size(); ++p) {
        Mat q = load(&Q[p * nn], n), qi = q.inverse();
        store(qi * load(&d1[p * nn], n) + qi * load(att.a1(p), n) * q, &b.A1[p * nn]);
        store(qi * load(&d2[p * nn], n) + qi * load(att.a2(p), n) * q, &b.A2[p * nn]);
        store(qi * load(att.phi(p), n) * q, &b.Phi[p * nn]);
    }
    return b;
}

std::vector<cd> connection_curvature(const AttenuationPair& att) {
    const Grid2D& g = att.grid;
    const int n = att.n;
    const std::size_t nn = att.nn();
    std::vector<cd> d1A2(att.A2.size()), d2A1(att.A1.size()), F(att.A1.size());
    fd_axis(g, att.A2.data(), d1A2.data(), static_cast<int>(nn), 0);
    fd_axis(g, att.A1.data(), d2A1.data(), static_cast<int>(nn), 1);
    for (std::size_t p = 0; p < g.size(); ++p) {
        Mat a1 = load(att.a1(p), n), a2 = load(att.a2(p), n);
        store(load(&d1A2[p * nn], n) - load(&d2A1[p * nn], n) + a1 * a2 - a2 * a1, &F[p * nn]);
    }
    return F;
}

double flatness_residual(const AttenuationPair& att, double R) {
    std::vector<cd> F = connection_curvature(att);
    const Grid2D& g = att.grid;
    double r = 0;
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j)
            if (inside(g, i, j, R)) r = std::max(r, load(&F[g.idx(i, j) * att.nn()], att.n).norm());
    return r;
}

double smooth_step(double r, double r0, double r1) {
    if (r <= r0) return 1;
    if (r >= r1) return 0;
    double t = (r - r0) / (r1 - r0);
    auto f = [](double s) { return s > 0 ? std::exp(-1 / s) : 0.0; };
    return f(1 - t) / (f(1 - t) + f(t));
}

AttenuationPair radial_cutoff(const AttenuationPair& att, double r0, double r1) {
    AttenuationPair b = att;
    const Grid2D& g = att.grid;
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j) {
            double chi = smooth_step(std::hypot(g.x(i), g.x(j)), r0, r1);
            std::size_t p = g.idx(i, j);
            for (std::size_t e = 0; e < att.nn(); ++e) {
                b.A1[p * att.nn() + e] *= chi;
                b.A2[p * att.nn() + e] *= chi;
                b.Phi[p * att.nn() + e] *= chi;
            }
        }
    return b;
}

bool same_grid(const Grid2D& a, const Grid2D& b) { return a.n == b.n && std::abs(a.L - b.L) <= 1e-14 * a.L; }

}  // namespace xray
