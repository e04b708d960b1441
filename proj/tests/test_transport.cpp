#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <random>

#include "xray/identities.hpp"
#include "xray/transport.hpp"

using namespace xray;

namespace {

SMField constant_field(const BundleP& b, int n, cd c) {
    SMField u(b, n);
    for (auto& x : u.v) x = c;
    return u;
}

double fan_max(const BoundaryFan& f) {
    double m = 0;
    for (const auto& v : f.values) m = std::max(m, std::abs(v));
    return m;
}

using MatX = Eigen::Matrix<cd, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

TEST_CASE("transport along a diameter") {
    auto s = ConformalSurface::euclidean(1);
    auto b = make_bundle(s, 33, 8);
    SMField one = constant_field(b, 1, 1.0);
    auto u = solve_transport_ray(s, nullptr, one, {1, 0, kPi});
    CHECK(std::abs(u[0] - 2.0) < 1e-10);
    auto z = solve_transport_ray(s, nullptr, SMField(b, 1), {1, 0, kPi});
    CHECK(std::abs(z[0]) == 0);
}

TEST_CASE("constant Higgs field closed form") {
    auto s = ConformalSurface::euclidean(1);
    auto b = make_bundle(s, 33, 8);
    SMField one = constant_field(b, 1, 1.0);
    for (double a : {0.7, -1.3}) {
        AttenuationPair att = constant_higgs(b->grid(), 1, a);
        for (double alpha : {0.0, 0.6}) {
            SMPoint p = fan_point_plus(1, 0.3, alpha);
            double L = 2 * std::cos(alpha);
            auto u = solve_transport_ray(s, &att, one, p);
            CHECK(std::abs(u[0] - (std::exp(a * L) - 1) / a) < 1e-9);
        }
    }
}

TEST_CASE("xray transform of 1 gives chord lengths") {
    auto s = ConformalSurface::euclidean(1);
    auto b = make_bundle(s, 33, 8);
    FanSpec fan;
    fan.n_beta = 12;
    fan.n_alpha = 8;
    BoundaryFan d = xray_transform(s, nullptr, constant_field(b, 1, 1.0), fan);
    for (int ib = 0; ib < fan.n_beta; ++ib)
        for (int ia = 0; ia < fan.n_alpha; ++ia)
            CHECK(std::abs(d.at(ib, ia)[0] - 2 * std::cos(fan.alpha(ib, ia))) < 1e-10);
    CHECK(fan_max(xray_transform(s, nullptr, SMField(b, 1), fan)) == 0);
}

TEST_CASE("kernel: transform of Xh vanishes") {
    auto s = ConformalSurface::poincare(0.7);
    auto b = make_bundle(s, 129, 16);
    TestFieldOptions o;
    o.cutoff_exponent = 4;
    SMField h = make_test_field(b, 1, 3, {0, 1}, o);
    FanSpec fan;
    fan.n_beta = 24;
    fan.n_alpha = 10;
    BoundaryFan k = xray_transform(s, nullptr, apply_X(h), fan);
    CHECK(fan_max(k) <= 1e-5);
}

TEST_CASE("scattering data basics") {
    auto s = ConformalSurface::poincare(0.6);
    Grid2D g{65, 0.6};
    FanSpec fan;
    fan.n_beta = 12;
    fan.n_alpha = 6;
    BoundaryFan C0 = scattering_data(s, nullptr, fan);
    REQUIRE(C0.rows == 1);
    for (std::size_t i = 0; i < C0.nodes(); ++i) CHECK(std::abs(C0.values[i] - 1.0) < 1e-14);
    AttenuationPair z2 = AttenuationPair::zero(g, 2);
    BoundaryFan C2 = scattering_data(s, &z2, fan);
    for (std::size_t i = 0; i < C2.nodes(); ++i) {
        CHECK(std::abs(C2.values[4 * i] - 1.0) < 1e-14);
        CHECK(std::abs(C2.values[4 * i + 1]) < 1e-14);
        CHECK(std::abs(C2.values[4 * i + 3] - 1.0) < 1e-14);
    }
    AttenuationPair att = random_attenuation(g, 2, 0.6, 4);
    BoundaryFan C = scattering_data(s, &att, fan);
    REQUIRE(C.cond.size() == C.nodes());
    for (std::size_t i = 0; i < C.nodes(); ++i) {
        Eigen::Map<const MatX> M(&C.values[4 * i], 2, 2);
        CHECK(std::abs(M.determinant()) > 1e-8);
        CHECK(std::isfinite(C.cond[i]));
    }
    // abelian closed form
    AttenuationOptions ao;
    ao.a_scale = 0;
    AttenuationPair ab = random_attenuation(g, 1, 0.6, 9, ao);
    CHECK(abelian_scattering_error(s, ab, fan) <= 1e-6);
    CHECK_THROWS_AS(abelian_scattering_error(s, att, fan), ConfigError);
}

TEST_CASE("gauge transforms") {
    auto s = ConformalSurface::euclidean(0.8);
    Grid2D g{129, 0.8};
    AttenuationPair att = random_attenuation(g, 2, 0.8, 12);
    std::vector<cd> id(g.size() * 4, 0.0);
    for (std::size_t p = 0; p < g.size(); ++p) id[4 * p] = id[4 * p + 3] = 1.0;
    AttenuationPair same = gauge_transform(att, id);
    double d = 0;
    for (std::size_t i = 0; i < att.A1.size(); ++i)
        d = std::max({d, std::abs(same.A1[i] - att.A1[i]), std::abs(same.Phi[i] - att.Phi[i])});
    CHECK(d < 1e-14);

    auto Q = random_gauge(g, 2, 0.7, 0.5, 13);
    AttenuationPair pure = gauge_transform(AttenuationPair::zero(g, 2), Q);
    CHECK(flatness_residual(pure, 0.7) <= 1e-4);

    std::vector<cd> bad = Q;
    bad[0] += 0.1;
    CHECK_THROWS_AS(gauge_transform(att, bad), ConfigError);
}

TEST_CASE("gauge invariance of scattering data (property)") {
    auto s = ConformalSurface::euclidean(0.8);
    Grid2D g{129, 0.8};
    FanSpec fan;
    fan.n_beta = 12;
    fan.n_alpha = 6;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        AttenuationOptions ao;
        ao.unitary = seed == 1;
        AttenuationPair att = random_attenuation(g, 2, 0.8, seed, ao);
        AttenuationPair B = gauge_transform(att, random_gauge(g, 2, 0.72, 0.5, seed + 50));
        CHECK(max_node_distance(scattering_data(s, &att, fan), scattering_data(s, &B, fan)) <= 1e-5);
    }
}

TEST_CASE("attenuation is degree one in the fiber") {
    auto s = ConformalSurface::poincare(0.6);
    auto b = make_bundle(s, 33, 16);
    AttenuationPair att = random_attenuation(b->grid(), 1, 0.6, 2);
    SMField one = constant_field(b, 1, 1.0);
    std::vector<double> dn = fourier_modes(multiply_A(one, att)).degree_norms();
    double tot = 0;
    for (double v : dn) tot += v;
    CHECK(dn[1] >= tot * (1 - 1e-12));
    AttenuationOptions u;
    u.unitary = true;
    CHECK(random_attenuation(b->grid(), 3, 0.6, 2, u).unitary());
    CHECK_FALSE(random_attenuation(b->grid(), 3, 0.6, 2).unitary());
}

TEST_CASE("fundamental solution semigroup") {
    auto s = ConformalSurface::poincare(0.7);
    Grid2D g{65, 0.7};
    AttenuationPair att = random_attenuation(g, 2, 0.7, 8);
    Ray r = sample_ray(s, fan_point_plus(0.7, 1.0, 0.2), 0.01);
    RayStates rs = ray_states(s, r);
    MatrixFn M = attenuation_fn(att);
    const int a = rs.nsteps / 3, c = rs.nsteps;
    auto U1 = fundamental_forward(rs, 2, M, 0, a), U2 = fundamental_forward(rs, 2, M, 0, c),
         U12 = fundamental_forward(rs, 2, M, a, c);
    Eigen::Map<const MatX> A1(U1.data(), 2, 2), A2(U2.data(), 2, 2), A12(U12.data(), 2, 2);
    MatX diff = A2 * A1.inverse() - A12;
    CHECK(diff.norm() <= 1e-8 * std::max(1.0, rs.length));
}

TEST_CASE("extended solver agrees on convex rays") {
    auto s = ConformalSurface::poincare(0.6);
    auto b = make_bundle(s, 129, 16);
    AttenuationPair att = random_attenuation(Grid2D{161, s.extended_radius()}, 2, 0.6, 3);
    TestFieldOptions o;
    o.cutoff_exponent = 3;
    SMField f = make_test_field(b, 2, 4, {0, 1, 2}, o);
    double worst = 0;
    for (double beta : {0.0, 1.3, 4.0})
        for (double alpha : {-1.2, -0.3, 0.5, 1.4}) {
            SMPoint p = fan_point_plus(0.6, beta, alpha);
            auto u = solve_transport_ray(s, &att, f, p), w = solve_transport_extended(s, &att, f, p);
            for (int c = 0; c < 2; ++c) worst = std::max(worst, std::abs(u[c] - w[c]));
        }
    CHECK(worst <= 1e-6);
    auto z = solve_transport_extended(s, &att, SMField(b, 2), fan_point_plus(0.6, 0, 0));
    CHECK(std::abs(z[0]) == 0);
}

TEST_CASE("extended solver is smooth across near-tangential rays") {
    auto s = ConformalSurface::euclidean(0.8);
    auto b = make_bundle(s, 65, 16);
    // supported well inside the disc
    SMField f = make_test_field(b, 1, 6, {0, 1});
    const Grid2D& g = b->grid();
    for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j)
            if (std::hypot(g.x(i), g.x(j)) > 0.5)
                for (int k = 0; k < b->nth(); ++k) f.at(g.idx(i, j), 0, k) = 0;
    std::vector<double> vals;
    const double da = 2e-4;
    for (int k = -3; k <= 3; ++k)
        vals.push_back(solve_transport_extended(s, nullptr, f, fan_point_plus(0.8, 0.4, kPi / 2 - 1e-3 + k * da))[0].real());
    double second = 0;
    for (std::size_t i = 1; i + 1 < vals.size(); ++i)
        second = std::max(second, std::abs(vals[i + 1] - 2 * vals[i] + vals[i - 1]) / (da * da));
    CHECK(second < 1e3);
}

TEST_CASE("projective transfer Euclidean to Klein") {
    Grid2D g{64, 0.84};
    AttenuationPair att = random_attenuation(g, 2, 0.8, 5);
    FanSpec fan;
    fan.n_beta = 8;
    fan.n_alpha = 4;
    for (int k : {0, 1, 2}) {
        ProjectiveTransfer t = projective_transfer(0.8, att, k, 40 + k, fan);
        CHECK(t.max_rel <= 1e-4);
        CHECK(t.rays == fan.n_beta * fan.n_alpha);
        if (k == 1) CHECK(t.scattering_max <= 1e-4);
    }
    CHECK_THROWS_AS(projective_transfer(1.2, att, 1, 1, fan), ConfigError);
}

TEST_CASE("fan CSV round trip") {
    auto s = ConformalSurface::euclidean(1);
    auto b = make_bundle(s, 33, 8);
    FanSpec fan;
    fan.n_beta = 6;
    fan.n_alpha = 3;
    fan.interlace = 2;
    BoundaryFan d = xray_transform(s, nullptr, make_test_field(b, 2, 1, {0, 1}), fan);
    auto path = std::filesystem::temp_directory_path() / "xray_fan_test.csv";
    save_fan_csv(d, path.string());
    BoundaryFan e = load_fan_csv(path.string(), fan, 2);
    for (std::size_t i = 0; i < d.values.size(); ++i) CHECK(std::abs(d.values[i] - e.values[i]) == 0);
    FanSpec other = fan;
    other.interlace = 1;
    CHECK_THROWS_AS(load_fan_csv(path.string(), other, 2), ConfigError);
    CHECK_THROWS_AS(load_fan_csv(path.string(), fan, 1), ConfigError);
    std::filesystem::remove(path);
}

TEST_CASE("fan geometry") {
    FanSpec f;
    for (int ib : {0, 1, 7})
        for (int ia = 0; ia < f.n_alpha; ++ia) {
            CHECK(std::abs(f.alpha(ib, ia)) < kPi / 2 - f.alpha_margin + 1e-12);
        }
    SMPoint p = fan_point_plus(2, 0, 0);
    CHECK(p.x1 == doctest::Approx(2));
    CHECK(std::cos(p.theta) == doctest::Approx(-1));
}
