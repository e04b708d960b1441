#include <doctest.h>

#include <cmath>

#include "xray/identities.hpp"
#include "xray/weights.hpp"

using namespace xray;

namespace {

ConformalSurface variable_k() {
    return ConformalSurface::custom("log(2/(1 - x1^2 - x2^2)) + 0.1*x1", 0.7, -1, true);
}

}  // namespace

TEST_CASE("Pestov identity on the corpus surfaces") {
    for (const auto& s : {ConformalSurface::euclidean(1), ConformalSurface::poincare(0.7),
                          ConformalSurface::scaled_hyperbolic(4, 0.6), variable_k()}) {
        auto b = make_bundle(s, 64, 32);
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            IdentityReport r = pestov_report(make_test_field(b, 1, seed, {0, 1, 2, 3}));
            CHECK(r.pass);
            CHECK(r.relative_residual <= 1e-3);
            CHECK(r.relative_residual >= 0);
            double rhs = r.term("||XVu||^2") - r.term("(KVu,Vu)") + r.term("||Xu||^2");
            CHECK(rhs == doctest::Approx(r.rhs).epsilon(1e-12));
            CHECK(r.term("||VXu||^2") == doctest::Approx(r.lhs).epsilon(1e-12));
        }
    }
}

TEST_CASE("Pestov identity: zero field and degree zero") {
    auto b = make_bundle(ConformalSurface::poincare(0.7), 48, 16);
    IdentityReport z = pestov_report(SMField(b, 1));
    CHECK(z.lhs == 0);
    CHECK(z.rhs == 0);
    CHECK(z.pass);
    IdentityReport r = pestov_report(make_test_field(b, 1, 2, {0}));
    CHECK(r.term("||XVu||^2") == 0);
    CHECK(r.term("(KVu,Vu)") == 0);
    CHECK(r.relative_residual <= 1e-3);
}

TEST_CASE("Pestov identity converges at order >= 2") {
    auto s = variable_k();
    std::vector<double> e;
    for (int n : {32, 64, 128}) e.push_back(pestov_report(make_test_field(make_bundle(s, n, 32), 1, 4, {0, 1, 2, 3})).relative_residual);
    CHECK(std::log2(e[0] / e[1]) >= 2);
    CHECK(std::log2(e[1] / e[2]) >= 2);
}

TEST_CASE("attenuated Pestov identity") {
    auto s = ConformalSurface::poincare(0.7);
    auto b = make_bundle(s, 64, 32);
    AttenuationOptions o;
    o.unitary = true;
    AttenuationPair att = random_attenuation(b->grid(), 2, 0.7, 5, o);
    IdentityReport r = pestov_report(make_test_field(b, 2, 6, {0, 1, 2}), &att);
    CHECK(r.name == "pestov_attenuated");
    CHECK(r.relative_residual <= 1e-3);
    AttenuationPair bad = random_attenuation(b->grid(), 2, 0.7, 5);
    CHECK_THROWS_AS(pestov_report(make_test_field(b, 2, 6, {0, 1}), &bad), ConfigError);
}

TEST_CASE("localized Pestov identity") {
    auto e = make_bundle(ConformalSurface::euclidean(1), 64, 32);
    SMField u2 = make_test_field(e, 1, 3, {2});
    IdentityReport r = pestov_localized_report(u2, 2);
    CHECK(r.term("alpha_{l-1}") == 4);
    CHECK(r.term("beta_{l+1}") == 4);
    CHECK(r.term("(KVu,Vu)") == 0);
    CHECK(r.relative_residual <= 1e-3);
    auto h = make_bundle(ConformalSurface::scaled_hyperbolic(1, 0.6), 64, 32);
    IdentityReport r0 = pestov_localized_report(make_test_field(h, 1, 4, {0}), 0);
    CHECK(r0.term("alpha_{l-1}") == 0);
    CHECK(r0.relative_residual <= 1e-3);
    CHECK_THROWS_AS(pestov_localized_report(u2, -1), ConfigError);
}

TEST_CASE("localization sums to the global identity") {
    for (const auto& s : {ConformalSurface::poincare(0.7), variable_k()}) {
        SMField u = make_test_field(make_bundle(s, 64, 32), 1, 9, {0, 1, 2, 3, 4});
        LocalizationSum ls = localization_sum(u);
        CHECK(ls.totals_error <= 1e-8);
        CHECK(ls.vx_error <= 1e-8);
    }
}

TEST_CASE("localization cross terms") {
    auto v = make_bundle(variable_k(), 64, 32);
    for (auto [m, l] : {std::pair{1, 3}, {0, 2}, {2, 5}}) {
        CrossTerm c = localization_crossterm(make_test_field(v, 1, 30 + m, {m}), make_test_field(v, 1, 40 + l, {l}));
        CHECK(c.relative() <= 1e-6);
    }
    auto p = make_bundle(ConformalSurface::poincare(0.7), 48, 16);
    CrossTerm k = localization_crossterm(make_test_field(p, 1, 1, {1}), make_test_field(p, 1, 2, {2}));
    CHECK(std::abs(k.kvv) <= 1e-12 * k.norm_vu * k.norm_vw);
    CrossTerm same = localization_crossterm(make_test_field(v, 1, 1, {2}), make_test_field(v, 1, 2, {2}));
    CHECK(same.relative() > 1e-6);
}

TEST_CASE("Carleman estimate with logarithmic weights") {
    auto s = ConformalSurface::scaled_hyperbolic(1, 0.6);
    auto b = make_bundle(s, 64, 32);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        SMField u = make_test_field(b, 1, seed, {0, 1, 2, 3, 4, 5});
        // the margin RHS - LHS grows with tau
        for (int m : {1, 2, 3}) {
            double prev = -INFINITY;
            for (double tau : {1.0, 2.0, 4.0, 8.0}) {
                IdentityReport r = carleman_log_report(u, tau, m, 1);
                CHECK(r.pass);
                CHECK(r.rhs - r.lhs >= prev);
                prev = r.rhs - r.lhs;
            }
        }
        SMField one = make_test_field(b, 1, seed, {3});
        CHECK(carleman_log_report(one, 2, 3, 1).pass);
    }
    CHECK(carleman_log_report(make_test_field(b, 1, 1, {1}), 4, 1, 1).term("constant") == doctest::Approx(9));
    IdentityReport z = carleman_log_report(SMField(b, 1), 1, 1, 1);
    CHECK(z.pass);
    CHECK(z.lhs == 0);
    CHECK_THROWS_AS(carleman_log_report(SMField(b, 1), 0.5, 1, 1), ConfigError);
}

TEST_CASE("Carleman estimate with linear weights") {
    auto b = make_bundle(ConformalSurface::euclidean(1), 48, 16);
    NonpositiveWeights nw = nonpositive_weight_coeffs(2, 1.0, 0.5, 10000, 10);
    CHECK(carleman_linear_report(SMField(b, 1), 1.0, nw.m0, 1).pass);
    CHECK_THROWS_AS(carleman_linear_report(SMField(b, 1), 0.5, nw.m0, 1), ConfigError);
    CHECK_THROWS_AS(carleman_linear_report(SMField(b, 1), 1.0, nw.m0 - 1, 1), ConfigError);
    CHECK(carleman_linear_report(SMField(b, 1), 1.0, nw.m0, 1).term("constant") == doctest::Approx(24 / std::exp(2.0)));
}

TEST_CASE("shifted Pestov inequality") {
    auto b = make_bundle(ConformalSurface::scaled_hyperbolic(1, 0.6), 64, 32);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        SMField u = make_test_field(b, 1, seed, {0, 1, 2, 3, 4});
        for (double s : {0.0, 1.0, 2.0}) CHECK(shifted_pestov_report(u, s, 1).pass);
        IdentityReport r0 = shifted_pestov_report(u, 0, 1);
        CHECK(r0.term("||Xu||^2+||X_perp u||^2+||Vu||^2") <= r0.term("2C^2||VXu||^2"));
    }
    CHECK(shifted_pestov_report(SMField(b, 1), 1, 1).pass);
}

TEST_CASE("degree absorption replay") {
    AbsorptionOptions o;
    o.grid = 64;
    o.nth = 32;
    o.ray_check = false;
    AbsorptionReplay a = absorption_replay(o);
    CHECK(a.CR_over_tau <= 0.5);
    CHECK(a.tau == doctest::Approx(std::max(2 * a.C * a.R, 1.0)));
    CHECK(a.m == degree_bound(o.l0, o.degree + 1, a.C, a.R));
    CHECK(a.tail <= 2 * a.floor);
    CHECK(a.carleman.pass);
    CHECK(a.pass);
}

TEST_CASE("report serialization") {
    auto b = make_bundle(ConformalSurface::poincare(0.7), 32, 16);
    IdentityReport r = pestov_report(make_test_field(b, 1, 1, {0, 1}));
    auto j = to_json(r);
    CHECK(j["name"] == "pestov");
    CHECK(j["pass"].get<bool>());
    CHECK(j["terms"].contains("||Xu||^2"));
    CHECK(config_hash(j) == config_hash(to_json(r)));
    CHECK(config_hash(j).size() == 16);
}
