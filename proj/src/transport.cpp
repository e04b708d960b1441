#include "xray/transport.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "xray/parallel.hpp"

namespace xray {

using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

namespace {

Mat mat_at(const std::vector<cd>& M, std::size_t p, int n) {
    return Eigen::Map<const Eigen::Matrix<cd, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(&M[p * n * n], n, n);
}

void mat_store(const Mat& m, cd* out) {
    Eigen::Map<Eigen::Matrix<cd, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(out, m.rows(), m.cols()) = m;
}

std::vector<cd> sample_matrices(const RayStates& r, int n, const MatrixFn& M) {
    std::vector<cd> out(r.pts.size() * n * n, 0.0);
    if (M)
        for (std::size_t p = 0; p < r.pts.size(); ++p) M(r.pts[p], r.theta[p], &out[p * n * n]);
    return out;
}

}  // namespace

RayStates ray_states(const ConformalSurface& s, const Ray& r) {
    RayStates o;
    o.step = r.step;
    o.nsteps = r.nsteps;
    o.length = r.length;
    o.pts.reserve(r.pts.size());
    o.theta.reserve(r.pts.size());
    for (const auto& p : r.pts) {
        auto v = unit_velocity(s, p);
        o.pts.push_back({p.x1, p.x2, v[0], v[1]});
        o.theta.push_back(p.theta);
    }
    return o;
}

RayStates ray_states(const MetricRay& r) {
    RayStates o;
    o.step = r.step;
    o.nsteps = r.nsteps;
    o.length = r.length;
    o.pts = r.pts;
    for (const auto& p : r.pts) o.theta.push_back(std::atan2(p[3], p[2]));
    return o;
}

std::vector<cd> integrate_backward(const RayStates& r, int n, const MatrixFn& M, const SourceFn& f) {
    Vec u = Vec::Zero(n);
    if (r.nsteps == 0) return std::vector<cd>(n, 0.0);
    std::vector<cd> Ms = sample_matrices(r, n, M);
    std::vector<cd> fs(r.pts.size() * n, 0.0);
    for (std::size_t p = 0; p < r.pts.size(); ++p) f(r.pts[p], r.theta[p], &fs[p * n]);
    auto fv = [&](std::size_t p) { return Eigen::Map<const Vec>(&fs[p * n], n); };
    const double s = -r.step;
    for (int j = r.nsteps - 1; j >= 0; --j) {
        std::size_t a = 2 * j + 2, m = 2 * j + 1, b = 2 * j;
        Mat Ma = mat_at(Ms, a, n), Mm = mat_at(Ms, m, n), Mb = mat_at(Ms, b, n);
        Vec k1 = -Ma * u - fv(a);
        Vec k2 = -Mm * (u + 0.5 * s * k1) - fv(m);
        Vec k3 = -Mm * (u + 0.5 * s * k2) - fv(m);
        Vec k4 = -Mb * (u + s * k3) - fv(b);
        u += s / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return std::vector<cd>(u.data(), u.data() + n);
}

std::vector<cd> ray_kernel(const RayStates& r, int n, const MatrixFn& M) {
    std::vector<cd> G(r.pts.size() * n * n, 0.0);
    if (r.nsteps == 0) return G;
    std::vector<cd> Ms = sample_matrices(r, n, M);
    const Mat I = Mat::Identity(n, n), Z = Mat::Zero(n, n);
    const double s = -r.step;
    // RK4 stage as a linear map of (u, f_a, f_m, f_b)
    struct Blk {
        Mat u, fa, fm, fb;
    };
    Mat P = I;
    for (int j = 0; j < r.nsteps; ++j) {
        std::size_t a = 2 * j + 2, m = 2 * j + 1, b = 2 * j;
        Mat Ma = mat_at(Ms, a, n), Mm = mat_at(Ms, m, n), Mb = mat_at(Ms, b, n);
        Blk k1{-Ma, -I, Z, Z};
        Blk k2{-Mm * (I + 0.5 * s * k1.u), -Mm * (0.5 * s * k1.fa), -Mm * (0.5 * s * k1.fm) - I,
               -Mm * (0.5 * s * k1.fb)};
        Blk k3{-Mm * (I + 0.5 * s * k2.u), -Mm * (0.5 * s * k2.fa), -Mm * (0.5 * s * k2.fm) - I,
               -Mm * (0.5 * s * k2.fb)};
        Blk k4{-Mb * (I + s * k3.u), -Mb * (s * k3.fa), -Mb * (s * k3.fm), -Mb * (s * k3.fb) - I};
        Mat S = I + s / 6 * (k1.u + 2 * k2.u + 2 * k3.u + k4.u);
        Mat Ta = s / 6 * (k1.fa + 2 * k2.fa + 2 * k3.fa + k4.fa);
        Mat Tm = s / 6 * (k1.fm + 2 * k2.fm + 2 * k3.fm + k4.fm);
        Mat Tb = s / 6 * (k1.fb + 2 * k2.fb + 2 * k3.fb + k4.fb);
        // u_j = S u_{j+1} + Ta f_{j+1} + Tm f_mid + Tb f_j, and u_0 = P u_j + ...
        auto add = [&](std::size_t p, const Mat& T) {
            Mat cur = mat_at(G, p, n);
            mat_store(cur + P * T, &G[p * n * n]);
        };
        add(a, Ta);
        add(m, Tm);
        add(b, Tb);
        P = P * S;
    }
    return G;
}

std::vector<cd> fundamental_forward(const RayStates& r, int n, const MatrixFn& M, int first_step, int last_step) {
    if (last_step < 0) last_step = r.nsteps;
    Mat U = Mat::Identity(n, n);
    std::vector<cd> Ms = sample_matrices(r, n, M);
    const double s = r.step;
    for (int j = first_step; j < last_step; ++j) {
        std::size_t a = 2 * j, m = 2 * j + 1, b = 2 * j + 2;
        Mat Ma = mat_at(Ms, a, n), Mm = mat_at(Ms, m, n), Mb = mat_at(Ms, b, n);
        Mat k1 = -Ma * U;
        Mat k2 = -Mm * (U + 0.5 * s * k1);
        Mat k3 = -Mm * (U + 0.5 * s * k2);
        Mat k4 = -Mb * (U + s * k3);
        U += s / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    std::vector<cd> out(n * n);
    mat_store(U, out.data());
    return out;
}

MatrixFn attenuation_fn(const AttenuationPair& att) {
    return [&att](const MState& p, double, cd* out) {
        const std::size_t m = att.nn();
        std::vector<cd> a1(m), a2(m), ph(m);
        att.eval(p[0], p[1], a1.data(), a2.data(), ph.data());
        for (std::size_t e = 0; e < m; ++e) out[e] = a1[e] * p[2] + a2[e] * p[3] + ph[e];
    };
}

FieldSampler::FieldSampler(const SMField& f) : m_(fourier_modes(f)), n_(f.channels()) {
    const int nt = f.nth();
    double mx = 0;
    for (const auto& c : m_.coeffs) mx = std::max(mx, std::abs(c));
    std::vector<double> slot_max(nt, 0.0);
    for (std::size_t q = 0; q < m_.coeffs.size(); ++q) {
        int k = static_cast<int>(q % nt);
        slot_max[k] = std::max(slot_max[k], std::abs(m_.coeffs[q]));
    }
    for (int k = 0; k < nt; ++k)
        if (slot_max[k] > 1e-15 * mx) active_.push_back(k);
}

void FieldSampler::eval(double x1, double x2, double theta, cd* out) const {
    for (int c = 0; c < n_; ++c) out[c] = 0;
    const BundleP& b = m_.bundle();
    Stencil st;
    if (!make_stencil(b->grid(), x1, x2, st)) return;
    const int nt = b->nth(), block = n_ * nt;
    for (int k : active_) {
        int f = slot_freq(k, nt);
        cd e = k == nt / 2 ? cd(std::cos(f * theta)) : std::exp(cd(0, f * theta));
        for (int c = 0; c < n_; ++c) out[c] += interpolate(b->grid(), st, m_.coeffs.data(), block, c * nt + k) * e;
    }
}

SourceFn FieldSampler::as_source() const {
    return [this](const MState& p, double theta, cd* out) { eval(p[0], p[1], theta, out); };
}

SMPoint fan_point_plus(double radius, double beta, double alpha) {
    return {radius * std::cos(beta), radius * std::sin(beta), beta + kPi + alpha};
}

SMPoint fan_point_minus(double radius, double beta, double alpha) {
    return {radius * std::cos(beta), radius * std::sin(beta), beta + alpha};
}

double fan_weight(const ConformalSurface& s, const FanSpec& f, int ib, int ia) {
    double b = f.beta(ib), r = s.radius();
    double lam = s.lambda(r * std::cos(b), r * std::sin(b)).v;
    return std::cos(f.alpha(ib, ia)) * (kTwoPi / f.n_beta) * f.d_alpha() * r * std::exp(lam);
}

std::vector<cd> solve_transport_ray(const ConformalSurface& s, const AttenuationPair* att, const FieldSampler& f,
                                    const SMPoint& start, const TransportOptions& opt) {
    Ray r = sample_ray(s, start, opt.h);
    RayStates rs = ray_states(s, r);
    MatrixFn M = att ? attenuation_fn(*att) : MatrixFn{};
    if (att && att->n != f.channels()) throw ConfigError("attenuation and source channel counts differ");
    return integrate_backward(rs, f.channels(), M, f.as_source());
}

std::vector<cd> solve_transport_ray(const ConformalSurface& s, const AttenuationPair* att, const SMField& f,
                                    const SMPoint& start, const TransportOptions& opt) {
    FieldSampler fs(f);
    return solve_transport_ray(s, att, fs, start, opt);
}

BoundaryFan xray_transform(const ConformalSurface& s, const AttenuationPair* att, const SMField& f,
                           const FanSpec& fan, const TransportOptions& opt) {
    FieldSampler fs(f);
    const int n = f.channels();
    BoundaryFan out(fan, n, 1);
    parallel_for(out.nodes(), [&](std::size_t q) {
        int ib = static_cast<int>(q / fan.n_alpha), ia = static_cast<int>(q % fan.n_alpha);
        SMPoint p = fan_point_plus(s.radius(), fan.beta(ib), fan.alpha(ib, ia));
        std::vector<cd> u = solve_transport_ray(s, att, fs, p, opt);
        std::copy(u.begin(), u.end(), out.at(ib, ia));
    });
    return out;
}

BoundaryFan scattering_data(const ConformalSurface& s, const AttenuationPair* att, const FanSpec& fan,
                            const TransportOptions& opt) {
    const int n = att ? att->n : 1;
    BoundaryFan out(fan, n, n);
    out.cond.assign(out.nodes(), 1.0);
    MatrixFn M = att ? attenuation_fn(*att) : MatrixFn{};
    parallel_for(out.nodes(), [&](std::size_t q) {
        int ib = static_cast<int>(q / fan.n_alpha), ia = static_cast<int>(q % fan.n_alpha);
        SMPoint p = fan_point_minus(s.radius(), fan.beta(ib), fan.alpha(ib, ia));
        Ray r = sample_ray_reversed(s, p, opt.h);
        RayStates rs = ray_states(s, r);
        std::vector<cd> U = fundamental_forward(rs, n, M);
        std::copy(U.begin(), U.end(), out.at(ib, ia));
        Eigen::JacobiSVD<Mat> svd(mat_at(U, 0, n));
        auto sv = svd.singularValues();
        out.cond[q] = sv(0) / sv(n - 1);
    });
    return out;
}

double abelian_scattering_error(const ConformalSurface& s, const AttenuationPair& att, const FanSpec& fan,
                                const TransportOptions& opt) {
    if (att.n != 1) throw ConfigError("abelian check needs n = 1");
    for (std::size_t i = 0; i < att.A1.size(); ++i)
        if (att.A1[i] != 0.0 || att.A2[i] != 0.0) throw ConfigError("abelian check needs A = 0");
    BoundaryFan C = scattering_data(s, &att, fan, opt);
    std::vector<double> err(C.nodes(), 0.0);
    parallel_for(C.nodes(), [&](std::size_t q) {
        int ib = static_cast<int>(q / fan.n_alpha), ia = static_cast<int>(q % fan.n_alpha);
        // the incoming ray that ends at this outgoing node
        SMPoint out = fan_point_minus(s.radius(), fan.beta(ib), fan.alpha(ib, ia));
        Ray r = sample_ray_reversed(s, out, opt.h / 4);
        cd a1, a2, ph, I = 0;
        for (std::size_t p = 0; p < r.pts.size(); ++p) {
            att.eval(r.pts[p].x1, r.pts[p].x2, &a1, &a2, &ph);
            double w = (p == 0 || p + 1 == r.pts.size()) ? 1 : (p % 2 ? 4 : 2);
            I += w * ph;
        }
        I *= r.step / 6;  // half-step spacing, Simpson weights h/3
        err[q] = std::abs(C.at(ib, ia)[0] - std::exp(-I));
    });
    return *std::max_element(err.begin(), err.end());
}

double max_node_distance(const BoundaryFan& a, const BoundaryFan& b) {
    if (a.values.size() != b.values.size()) throw ConfigError("fans differ in shape");
    const std::size_t blk = static_cast<std::size_t>(a.rows) * a.cols;
    double d = 0;
    for (std::size_t q = 0; q < a.nodes(); ++q) {
        double s = 0;
        for (std::size_t e = 0; e < blk; ++e) s += std::norm(a.values[q * blk + e] - b.values[q * blk + e]);
        d = std::max(d, std::sqrt(s));
    }
    return d;
}

std::vector<cd> solve_transport_extended(const ConformalSurface& s, const AttenuationPair* att, const SMField& f,
                                         const SMPoint& start, const TransportOptions& opt) {
    const double R = s.radius(), Rx = s.extended_radius();
    if (!s.contains(start.x1, start.x2)) throw DomainError("extended solve: start outside M");
    if (att) {
        double g = att->grid.L;
        if (g < Rx * (1 - 1e-12)) throw ConfigError("extended solve: attenuation grid must cover the extended disc");
    }
    // f must vanish near the boundary so that extension by zero is smooth
    if (att && att->support_margin > 0) {
        const BundleP& b = f.bundle();
        const Grid2D& g = b->grid();
        double lim = R - att->support_margin, mx = 0;
        for (int i = 0; i < g.n; ++i)
            for (int j = 0; j < g.n; ++j)
                if (std::hypot(g.x(i), g.x(j)) > lim)
                    for (int c = 0; c < f.channels(); ++c)
                        for (int k = 0; k < f.nth(); ++k) mx = std::max(mx, std::abs(f.at(g.idx(i, j), c, k)));
        if (mx > 1e-12) throw ConfigError("extended solve: f not supported away from the boundary");
    }
    FieldSampler fs(f);
    Ray r = sample_ray(s, start, opt.h, Rx);
    RayStates rs = ray_states(s, r);
    std::optional<AttenuationPair> cut;
    MatrixFn M;
    if (att) {
        cut = radial_cutoff(*att, R, Rx);
        M = attenuation_fn(*cut);
    }
    return integrate_backward(rs, f.channels(), M, fs.as_source());
}

std::vector<cd> transport_metric_ray(const PlaneMetric& g, int n, const MatrixFn& M, const SourceFn& f,
                                     const MState& start, double bradius, const TransportOptions& opt) {
    MState s = start;
    double nv = std::sqrt(g.g(s[0], s[1]).quad(s[2], s[3]));
    s[2] /= nv;
    s[3] /= nv;
    return integrate_backward(ray_states(sample_metric_ray(g, s, opt.h, bradius)), n, M, f);
}

ProjectiveTransfer projective_transfer(double radius, const AttenuationPair& att, int k, std::uint64_t seed,
                                       const FanSpec& fan, const TransportOptions& opt) {
    if (!(radius > 0 && radius < 1)) throw ConfigError("projective_transfer: radius must lie in (0, 1)");
    if (k < 0 || k > 4) throw ConfigError("projective_transfer: tensor order must be 0..4");
    const int n = att.n;
    const PlaneMetric g1 = PlaneMetric::conformal(ConformalSurface::euclidean(radius)), g2 = PlaneMetric::klein();
    // f_I(x) for each of the 2^k index words I, quadratic in x
    const int words = 1 << k;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N01;
    std::vector<cd> coef(static_cast<std::size_t>(words) * 6 * n);
    for (auto& c : coef) c = cd(N01(rng), N01(rng)) / 4.0;
    auto tensor = [=](const MState& p, cd* out) {
        double y1 = p[0] / radius, y2 = p[1] / radius;
        const double mono[6] = {1, y1, y2, y1 * y1, y1 * y2, y2 * y2};
        for (int c = 0; c < n; ++c) out[c] = 0;
        for (int w = 0; w < words; ++w) {
            double vw = 1;
            for (int b = 0; b < k; ++b) vw *= (w >> b & 1) ? p[3] : p[2];
            for (int q = 0; q < 6; ++q)
                for (int c = 0; c < n; ++c) out[c] += vw * mono[q] * coef[(w * 6 + q) * n + c];
        }
    };
    SourceFn f2 = [=](const MState& p, double, cd* out) { tensor(p, out); };
    SourceFn f1 = [=, &g2](const MState& p, double, cd* out) {
        tensor(p, out);
        double w = std::pow(g2.g(p[0], p[1]).quad(p[2], p[3]), 0.5 * (1 - k));
        for (int c = 0; c < n; ++c) out[c] *= w;
    };
    AttenuationPair a = att;
    std::fill(a.Phi.begin(), a.Phi.end(), cd(0));
    MatrixFn M = attenuation_fn(a);

    const std::size_t rays = static_cast<std::size_t>(fan.n_beta) * fan.n_alpha;
    std::vector<double> dI(rays), sI(rays), dC(rays, 0.0);
    parallel_for(rays, [&](std::size_t q) {
        int ib = static_cast<int>(q / fan.n_alpha), ia = static_cast<int>(q % fan.n_alpha);
        SMPoint p = fan_point_plus(radius, fan.beta(ib), fan.alpha(ib, ia));
        MState st{p.x1, p.x2, std::cos(p.theta), std::sin(p.theta)};
        std::vector<cd> u1 = transport_metric_ray(g1, n, M, f1, st, radius, opt);
        std::vector<cd> u2 = transport_metric_ray(g2, n, M, f2, st, radius, opt);
        double d = 0, s = 0;
        for (int c = 0; c < n; ++c) {
            d = std::max(d, std::abs(u1[c] - u2[c]));
            s = std::max(s, std::abs(u2[c]));
        }
        dI[q] = d;
        sI[q] = s;
        if (k == 1) {
            auto fund = [&](const PlaneMetric& g) {
                MState s0 = st;
                double nv = std::sqrt(g.g(s0[0], s0[1]).quad(s0[2], s0[3]));
                s0[2] /= nv;
                s0[3] /= nv;
                RayStates rs = ray_states(sample_metric_ray(g, s0, opt.h, radius));
                return fundamental_forward(rs, n, M);
            };
            std::vector<cd> C1 = fund(g1), C2 = fund(g2);
            for (std::size_t e = 0; e < C1.size(); ++e) dC[q] = std::max(dC[q], std::abs(C1[e] - C2[e]));
        }
    });
    ProjectiveTransfer r;
    r.k = k;
    r.rays = static_cast<int>(rays);
    for (std::size_t q = 0; q < rays; ++q) {
        r.max_abs = std::max(r.max_abs, dI[q]);
        r.scale = std::max(r.scale, sI[q]);
        r.scattering_max = std::max(r.scattering_max, dC[q]);
    }
    r.max_rel = r.scale > 0 ? r.max_abs / r.scale : r.max_abs;
    return r;
}

void save_fan_csv(const BoundaryFan& f, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path);
    os.precision(17);
    os << "beta,alpha";
    for (int e = 0; e < f.rows * f.cols; ++e) os << ",re_" << e << ",im_" << e;
    os << "\n";
    for (int ib = 0; ib < f.spec.n_beta; ++ib)
        for (int ia = 0; ia < f.spec.n_alpha; ++ia) {
            os << f.spec.beta(ib) << "," << f.spec.alpha(ib, ia);
            const cd* v = f.at(ib, ia);
            for (int e = 0; e < f.rows * f.cols; ++e) os << "," << v[e].real() << "," << v[e].imag();
            os << "\n";
        }
}

BoundaryFan load_fan_csv(const std::string& path, const FanSpec& spec, int rows, int cols) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read " + path);
    BoundaryFan f(spec, rows, cols);
    const int blk = rows * cols;
    std::string line;
    std::getline(is, line);
    if (std::count(line.begin(), line.end(), ',') != 1 + 2 * blk)
        throw ConfigError(path + ": header does not match " + std::to_string(blk) + " complex columns");
    for (int ib = 0; ib < spec.n_beta; ++ib)
        for (int ia = 0; ia < spec.n_alpha; ++ia) {
            if (!std::getline(is, line)) throw ConfigError(path + ": fewer rows than the fan spec");
            std::vector<double> v;
            std::size_t pos = 0;
            while (pos <= line.size()) {
                std::size_t e = line.find(',', pos);
                if (e == std::string::npos) e = line.size();
                try {
                    v.push_back(std::stod(line.substr(pos, e - pos)));
                } catch (const std::exception&) {
                    throw ConfigError(path + ": bad number in row " + std::to_string(f.node(ib, ia) + 1));
                }
                pos = e + 1;
            }
            if (static_cast<int>(v.size()) != 2 + 2 * blk) throw ConfigError(path + ": wrong column count");
            if (std::abs(v[0] - spec.beta(ib)) > 1e-9 || std::abs(v[1] - spec.alpha(ib, ia)) > 1e-9)
                throw ConfigError(path + ": fan nodes differ from the configured fan");
            cd* out = f.at(ib, ia);
            for (int e = 0; e < blk; ++e) out[e] = cd(v[2 + 2 * e], v[3 + 2 * e]);
        }
    return f;
}

void save_scattering_json(const BoundaryFan& f, const std::string& path) {
    nlohmann::json j;
    j["n_beta"] = f.spec.n_beta;
    j["n_alpha"] = f.spec.n_alpha;
    j["alpha_margin"] = f.spec.alpha_margin;
    j["interlace"] = f.spec.interlace;
    j["n"] = f.rows;
    auto& nodes = j["nodes"] = nlohmann::json::array();
    for (int ib = 0; ib < f.spec.n_beta; ++ib)
        for (int ia = 0; ia < f.spec.n_alpha; ++ia) {
            nlohmann::json nd;
            nd["beta"] = f.spec.beta(ib);
            nd["alpha"] = f.spec.alpha(ib, ia);
            const cd* v = f.at(ib, ia);
            auto& C = nd["C"] = nlohmann::json::array();
            for (int e = 0; e < f.rows * f.cols; ++e) C.push_back({v[e].real(), v[e].imag()});
            nd["cond"] = f.cond.empty() ? 1.0 : f.cond[f.node(ib, ia)];
            nodes.push_back(nd);
        }
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write " + path);
    os << j.dump(1) << "\n";
}

}  // namespace xray
