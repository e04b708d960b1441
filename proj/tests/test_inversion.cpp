#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "xray/inversion.hpp"

using namespace xray;

namespace {

FanSpec small_fan(int nb = 48, int na = 16) {
    FanSpec f;
    f.n_beta = nb;
    f.n_alpha = na;
    return f;
}

TensorSource random_source(const Grid2D& g, int n, int m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N01;
    TensorSource f(g, n, m);
    for (auto& c : f.c) c = cd(N01(rng), N01(rng));
    return f;
}

}  // namespace

TEST_CASE("forward map on simple sources") {
    auto s = ConformalSurface::euclidean(1);
    auto b = make_bundle(s, 33, 8);
    FanSpec fan = small_fan(24, 12);
    TensorSource zero(b->grid(), 1, 0);
    BoundaryFan z = forward(s, nullptr, zero, fan);
    for (cd v : z.values) REQUIRE(v == cd(0));
    TensorSource one(b->grid(), 1, 0);
    for (auto& c : one.c) c = 1;
    BoundaryFan d = forward(s, nullptr, one, fan);
    double err = 0;
    for (int ib = 0; ib < fan.n_beta; ++ib)
        for (int ia = 0; ia < fan.n_alpha; ++ia)
            err = std::max(err, std::abs(d.at(ib, ia)[0] - 2 * std::cos(fan.alpha(ib, ia))));
    CHECK(err <= 1e-6);
}

TEST_CASE("forward map is linear") {
    auto s = ConformalSurface::poincare(0.7);
    auto b = make_bundle(s, 33, 8);
    FanSpec fan = small_fan(24, 8);
    AttenuationPair att = random_attenuation(b->grid(), 2, 0.7, 4);
    SMField u = make_test_field(b, 2, 1, {0, 1}), w = make_test_field(b, 2, 2, {0, 1});
    TensorSource f = tensor_source(u, 1), g = tensor_source(w, 1), fg = f;
    const cd a(0.3, -1.2);
    for (std::size_t i = 0; i < fg.c.size(); ++i) fg.c[i] = f.c[i] + a * g.c[i];
    BoundaryFan F = forward(s, &att, f, fan), G = forward(s, &att, g, fan), FG = forward(s, &att, fg, fan);
    double err = 0, ref = 0;
    for (std::size_t i = 0; i < FG.values.size(); ++i) {
        err = std::max(err, std::abs(FG.values[i] - F.values[i] - a * G.values[i]));
        ref = std::max(ref, std::abs(FG.values[i]));
    }
    CHECK(err <= 1e-8 * ref);
}

TEST_CASE("tensor source round trip") {
    auto b = make_bundle(ConformalSurface::euclidean(1), 17, 8);
    SMField u = make_test_field(b, 1, 3, {0, 1, 2});
    TensorSource f = tensor_source(u, 2);
    SMField w = synthesize(f, b);
    double err = 0;
    for (std::size_t i = 0; i < u.v.size(); ++i) err = std::max(err, std::abs(u.v[i] - w.v[i]));
    CHECK(err <= 1e-12);
    CHECK_THROWS_AS(tensor_source(u, 4), ConfigError);
}

TEST_CASE("adjoint dot-product test (property)") {
    auto s = ConformalSurface::poincare(0.7);
    Grid2D g = make_bundle(s, 33, 8)->grid();
    FanSpec fan = small_fan(36, 12);
    fan.interlace = 3;
    AttenuationPair att = random_attenuation(g, 2, 0.7, 8);
    for (int m : {0, 1}) {
        XrayOperator op(s, &att, g, 2, m, fan);
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            TensorSource f = random_source(g, 2, m, seed);
            BoundaryFan d(fan, 2, 1);
            std::mt19937_64 rng(seed + 100);
            std::normal_distribution<double> N01;
            for (auto& c : d.values) c = cd(N01(rng), N01(rng));
            BoundaryFan Ff = op.forward(f);
            TensorSource Ad = op.adjoint(d);
            double lhs = std::abs(op.fan_inner(Ff, d) - op.src_inner(f, Ad));
            CHECK(lhs <= 1e-6 * std::sqrt(op.fan_norm2(Ff) * op.fan_norm2(d)));
        }
    }
}

TEST_CASE("cached operator agrees with the ray solver") {
    auto s = ConformalSurface::euclidean(1);
    auto b = make_bundle(s, 65, 8);
    FanSpec fan = small_fan(24, 12);
    SMField u = make_test_field(b, 1, 5, {0});
    TensorSource f = tensor_source(u, 0);
    XrayOperator op(s, nullptr, b->grid(), 1, 0, fan);
    BoundaryFan a = op.forward(f), c = forward(s, nullptr, f, fan);
    double diff = 0, ref = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        diff = std::max(diff, std::abs(a.values[i] - c.values[i]));
        ref = std::max(ref, std::abs(c.values[i]));
    }
    CHECK(diff <= 1e-2 * ref);
}

TEST_CASE("CGLS basics") {
    auto s = ConformalSurface::euclidean(1);
    auto b = make_bundle(s, 33, 8);
    FanSpec fan = small_fan(48, 16);
    XrayOperator op(s, nullptr, b->grid(), 1, 0, fan);
    BoundaryFan zero(fan, 1, 1);
    CglsResult z = cgls_reconstruct(op, zero);
    for (cd c : z.f.c) REQUIRE(c == cd(0));
    CHECK(!z.diverged);

    TensorSource truth = tensor_source(make_test_field(b, 1, 2, {0}), 0);
    BoundaryFan d = op.forward(truth);
    CglsOptions o;
    o.iters = 60;
    CglsResult r = cgls_reconstruct(op, d, o);
    CHECK(!r.diverged);
    for (std::size_t i = 1; i < r.residual.size(); ++i) REQUIRE(r.residual[i] <= r.residual[i - 1] * (1 + 1e-12));
    CHECK(r.residual.back() <= 1e-2 * r.residual.front());

    auto path = std::filesystem::temp_directory_path() / "xray_source.bin";
    save_source(r.f, path.string());
    CHECK(std::filesystem::file_size(path) > 0);
    std::filesystem::remove(path);
}

TEST_CASE("reconstruction improves as the fan is refined") {
    auto s = ConformalSurface::euclidean(1);
    auto b = make_bundle(s, 33, 8);
    SMField u = make_test_field(b, 1, 7, {0});
    TensorSource truth = tensor_source(u, 0);
    std::vector<double> err;
    for (auto [nb, na] : {std::pair{24, 8}, {72, 24}}) {
        FanSpec fan = small_fan(nb, na);
        BoundaryFan d = xray_transform(s, nullptr, u, fan, {0.005});
        XrayOperator op(s, nullptr, b->grid(), 1, 0, fan);
        CglsOptions o;
        o.iters = 80;
        err.push_back(relative_error(s, cgls_reconstruct(op, d, o).f, truth));
    }
    CHECK(err[1] < err[0]);
    CHECK(relative_error(s, truth, truth) == 0);
}

TEST_CASE("degree-one kernel fit") {
    auto s = ConformalSurface::euclidean(1);
    auto b = make_bundle(s, 33, 8);
    // diff = X u for a degree-0 u vanishing at the boundary lies in the kernel
    SMField u = make_test_field(b, 1, 4, {0});
    TensorSource diff = tensor_source(apply_X(u), 1);
    KernelFit kf = fit_gauge_kernel(s, nullptr, diff);
    CHECK(kf.diff_norm > 0);
    CHECK(kf.residual <= 1e-3 * kf.diff_norm);
    TensorSource zero(b->grid(), 1, 1);
    CHECK(fit_gauge_kernel(s, nullptr, zero).residual == 0);
}

TEST_CASE("scattering rigidity probe") {
    auto s = ConformalSurface::euclidean(0.8);
    Grid2D g{65, 0.8};
    FanSpec fan = small_fan(12, 6);
    AttenuationPair A = random_attenuation(g, 2, 0.8, 21);
    ScatteringProbe same = scattering_rigidity_probe(s, A, A, fan);
    CHECK(same.D <= 1e-12);
    CHECK(same.max_cond >= 1);
    AttenuationPair B = A;
    AttenuationPair P = random_attenuation(g, 2, 0.8, 22);
    for (std::size_t i = 0; i < B.Phi.size(); ++i) B.Phi[i] += 0.1 * P.Phi[i];
    CHECK(scattering_rigidity_probe(s, A, B, fan).D >= 0.01);
}
