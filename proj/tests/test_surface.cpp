#include <doctest.h>

#include <cmath>
#include <random>

#include "xray/surface.hpp"

using namespace xray;

TEST_CASE("curvature of the model surfaces") {
    auto e = ConformalSurface::euclidean(1);
    auto p = ConformalSurface::poincare(0.7);
    auto h = ConformalSurface::scaled_hyperbolic(4, 0.6);
    for (auto [x, y] : {std::pair{0.0, 0.0}, {0.3, -0.2}, {-0.5, 0.1}}) {
        CHECK(e.curvature(x, y) == 0);
        CHECK(p.curvature(x, y) == doctest::Approx(-1).epsilon(1e-12));
        CHECK(h.curvature(x, y) == doctest::Approx(-4).epsilon(1e-12));
    }
    CHECK_THROWS_AS(e.curvature(2, 0), DomainError);
}

TEST_CASE("curvature from finite differences of lambda") {
    auto h = ConformalSurface::scaled_hyperbolic(4, 0.6);
    const double d = 1e-3;
    for (auto [x, y] : {std::pair{0.1, 0.2}, {-0.3, 0.25}}) {
        double lap = (h.lambda(x + d, y).v + h.lambda(x - d, y).v + h.lambda(x, y + d).v + h.lambda(x, y - d).v -
                      4 * h.lambda(x, y).v) / (d * d);
        CHECK(-std::exp(-2 * h.lambda(x, y).v) * lap == doctest::Approx(-4).epsilon(1e-5));
    }
}

TEST_CASE("custom lambda matches the built-in Poincare model") {
    auto c = ConformalSurface::custom("log(2/(1 - x1^2 - x2^2))", 0.7);
    auto p = ConformalSurface::poincare(0.7);
    for (auto [x, y] : {std::pair{0.0, 0.1}, {0.4, -0.3}}) {
        CHECK(c.lambda(x, y).v == doctest::Approx(p.lambda(x, y).v));
        CHECK(c.curvature(x, y) == doctest::Approx(-1).epsilon(1e-9));
    }
    CHECK_THROWS(ConformalSurface::custom("log(", 0.5));
    CHECK_THROWS_AS(ConformalSurface::poincare(1.2), ConfigError);
}

TEST_CASE("curvature certificates") {
    CHECK_NOTHROW(require_negative_curvature(ConformalSurface::scaled_hyperbolic(1, 0.6), 1));
    CHECK_THROWS_AS(require_negative_curvature(ConformalSurface::euclidean(1), 0.5), ConfigError);
    auto cs = certify_curvature(ConformalSurface::scaled_hyperbolic(2, 0.5));
    CHECK(cs.max_K + 2 <= 1e-10);
    auto unflagged = ConformalSurface::custom("log(2/(1 - x1^2 - x2^2))", 0.6);
    CHECK_THROWS_AS(require_negative_curvature(unflagged, 0.5), ConfigError);
    auto flagged = ConformalSurface::custom("log(2/(1 - x1^2 - x2^2)) + 0.05*x1", 0.6, -1, true);
    CHECK(certify_curvature(flagged).max_K < 0);
}

TEST_CASE("geodesic flow examples") {
    auto e = ConformalSurface::euclidean(1);
    GeodesicTrace t = geodesic_flow(e, {0, 0, 0}, 0.5);
    CHECK(t.samples.back().p.x1 == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(std::abs(t.samples.back().p.x2) < 1e-14);
    CHECK(t.samples.front().t == 0);
    for (std::size_t i = 1; i < t.samples.size(); ++i) CHECK(t.samples[i].t > t.samples[i - 1].t);

    auto p = ConformalSurface::poincare(0.7);
    GeodesicTrace d = geodesic_flow(p, {0, 0, 0}, 10);
    CHECK(d.exited);
    for (const auto& s : d.samples) {
        CHECK(std::abs(s.p.x2) < 1e-14);
        CHECK(std::abs(s.p.theta) < 1e-14);
    }
}

TEST_CASE("exit times") {
    auto e = ConformalSurface::euclidean(1);
    for (double th : {0.0, 1.0, 4.0}) CHECK(exit_time(e, {0, 0, th}) == doctest::Approx(1).epsilon(1e-10));
    CHECK(exit_time(e, {1, 0, kPi}) == doctest::Approx(2).epsilon(1e-10));
    auto p = ConformalSurface::poincare(0.5);
    CHECK(exit_time(p, {0, 0, 0}) == doctest::Approx(2 * std::atanh(0.5)).epsilon(1e-8));
    // tangential start on the boundary leaves immediately
    CHECK(exit_time(e, {1, 0, kPi / 2}) == doctest::Approx(0).epsilon(1e-12));
}

TEST_CASE("flow reversibility and unit speed (property)") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(-1, 1);
    for (const auto& s : {ConformalSurface::poincare(0.7), ConformalSurface::scaled_hyperbolic(4, 0.6),
                          ConformalSurface::custom("0.3*x1*x2 + 0.1*x1^2", 0.8)}) {
        for (int k = 0; k < 10; ++k) {
            SMPoint a{0.4 * s.radius() * U(rng), 0.4 * s.radius() * U(rng), kPi * (1 + U(rng))};
            double t = 0.3 * exit_time(s, a);
            GeodesicTrace f = geodesic_flow(s, a, t);
            GeodesicTrace b = geodesic_flow(s, f.samples.back().p, -t);
            const SMPoint& z = b.samples.back().p;
            CHECK(std::hypot(z.x1 - a.x1, z.x2 - a.x2) < 1e-9);
            CHECK(std::abs(std::remainder(z.theta - a.theta, kTwoPi)) < 1e-9);
            // endpoint of the full ray sits on the boundary
            GeodesicTrace full = geodesic_flow(s, a, 100);
            const SMPoint& q = full.samples.back().p;
            CHECK(std::abs(std::hypot(q.x1, q.x2) - s.radius()) < 1e-9);
            // unit speed: |x'| e^lambda = 1 by finite difference along the trace
            const auto& sm = full.samples;
            std::size_t i = sm.size() / 2;
            double dt = sm[i + 1].t - sm[i - 1].t;
            double v = std::hypot(sm[i + 1].p.x1 - sm[i - 1].p.x1, sm[i + 1].p.x2 - sm[i - 1].p.x2) / dt;
            double mx = 0.5 * (sm[i + 1].p.x1 + sm[i - 1].p.x1), my = 0.5 * (sm[i + 1].p.x2 + sm[i - 1].p.x2);
            CHECK(v * std::exp(s.lambda(mx, my).v) == doctest::Approx(1).epsilon(1e-3));
        }
    }
}

TEST_CASE("sample_ray layout") {
    auto e = ConformalSurface::euclidean(1);
    Ray r = sample_ray(e, {-1, 0, 0}, 0.1);
    CHECK(r.length == doctest::Approx(2).epsilon(1e-10));
    CHECK(r.pts.size() == static_cast<std::size_t>(2 * r.nsteps + 1));
    CHECK(r.step * r.nsteps == doctest::Approx(r.length));
    Ray q = sample_ray_reversed(e, {1, 0, 0}, 0.1);
    CHECK(q.pts.front().x1 == doctest::Approx(-1).epsilon(1e-10));
    CHECK(q.pts.back().x1 == doctest::Approx(1).epsilon(1e-10));
}

TEST_CASE("Klein-Poincare maps") {
    auto z = klein_from_poincare(0, 0);
    CHECK(z[0] == 0);
    auto w = klein_from_poincare(0.5, 0);
    CHECK(w[0] == doctest::Approx(0.8));
    CHECK(w[1] == 0);
    auto b = poincare_from_klein(w[0], w[1]);
    CHECK(b[0] == doctest::Approx(0.5));
    // a Poincare geodesic maps into a Klein chord
    auto p = ConformalSurface::poincare(0.9);
    GeodesicTrace t = geodesic_flow(p, {0.3, -0.2, 1.1}, 100, {0.005});
    auto a0 = klein_from_poincare(t.samples.front().p.x1, t.samples.front().p.x2);
    auto a1 = klein_from_poincare(t.samples.back().p.x1, t.samples.back().p.x2);
    double dx = a1[0] - a0[0], dy = a1[1] - a0[1], n = std::hypot(dx, dy);
    double worst = 0;
    for (const auto& s : t.samples) {
        auto k = klein_from_poincare(s.p.x1, s.p.x2);
        worst = std::max(worst, std::abs((k[0] - a0[0]) * dy - (k[1] - a0[1]) * dx) / n);
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("first integral of geodesic equivalence") {
    auto E = PlaneMetric::conformal(ConformalSurface::euclidean(0.8));
    auto K = PlaneMetric::klein();
    auto P = PlaneMetric::conformal(ConformalSurface::poincare(0.8));
    CHECK(first_integral_H(E, E, 0.1, 0.2, 0.6, 0.8) == doctest::Approx(1));
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> U(-1, 1);
    double worst = 0, control = INFINITY;
    for (int k = 0; k < 10; ++k) {
        double th = kPi * U(rng);
        MState s{0.4 * U(rng), 0.4 * U(rng), std::cos(th), std::sin(th)};
        CHECK(first_integral_drift(E, E, s, 0.8) < 1e-12);
        worst = std::max(worst, first_integral_drift(E, K, s, 0.8));
        control = std::min(control, first_integral_drift(E, P, s, 0.8));
    }
    CHECK(worst <= 1e-5);
    CHECK(control >= 1e-2);
}

TEST_CASE("Klein metric geodesics are chords") {
    auto K = PlaneMetric::klein();
    MetricRay r = sample_metric_ray(K, {0.1, -0.3, 0.5, 0.7}, 0.01, 0.8);
    const MState& a = r.pts.front();
    const MState& b = r.pts.back();
    for (const auto& s : r.pts) {
        double cross = (s[0] - a[0]) * (b[1] - a[1]) - (s[1] - a[1]) * (b[0] - a[0]);
        CHECK(std::abs(cross) < 1e-9);
    }
    CHECK(std::hypot(b[0], b[1]) == doctest::Approx(0.8).epsilon(1e-9));
}

TEST_CASE("surface hash is stable and distinguishes kinds") {
    CHECK(ConformalSurface::poincare(0.7).hash() == ConformalSurface::poincare(0.7).hash());
    CHECK(ConformalSurface::poincare(0.7).hash() != ConformalSurface::poincare(0.6).hash());
    CHECK(parse_kind(kind_name(SurfaceKind::scaled_hyperbolic)) == SurfaceKind::scaled_hyperbolic);
    CHECK_THROWS_AS(parse_kind("sphere"), ConfigError);
}
