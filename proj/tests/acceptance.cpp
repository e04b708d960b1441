// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "xray/identities.hpp"
#include "xray/inversion.hpp"
#include "xray/riccati.hpp"
#include "xray/transport.hpp"
#include "xray/weights.hpp"

using namespace xray;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
    void need(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

ConformalSurface variable_k() {
    return ConformalSurface::custom("log(2/(1 - x1^2 - x2^2)) + 0.1*x1", 0.7, -1, true);
}

std::vector<std::uint64_t> seeds20() {
    std::vector<std::uint64_t> s;
    for (std::uint64_t i = 1; i <= 20; ++i) s.push_back(i);
    return s;
}

// AC1
Outcome pestov() {
    Outcome o;
    const std::vector<std::pair<std::string, ConformalSurface>> surfaces = {
        {"euclidean", ConformalSurface::euclidean(1)},
        {"poincare", ConformalSurface::poincare(0.7)},
        {"scaled_hyperbolic(4)", ConformalSurface::scaled_hyperbolic(4, 0.6)},
        {"variable K", variable_k()}};
    CurvatureCertificate cert = certify_curvature(surfaces[3].second);
    o.need(cert.max_K < 0, "variable-K surface not certified negative");
    double worst = 0, worst_order = INFINITY;
    for (const auto& [name, s] : surfaces) {
        auto t0 = std::chrono::steady_clock::now();
        auto b = make_bundle(s, 128, 64);
        double w = 0;
        for (auto sd : seeds20()) w = std::max(w, pestov_report(make_test_field(b, 1, sd, {0, 1, 2, 3})).relative_residual);
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("    %-22s worst residual %.2e  (%.0f s)\n", name.c_str(), w, secs);
        o.need(w <= 1e-3, name + " residual " + fmt("%.2e", w));
        worst = std::max(worst, w);
        std::vector<double> e;
        for (int n : {32, 64, 128}) e.push_back(pestov_report(make_test_field(make_bundle(s, n, 64), 1, 1, {0, 1, 2, 3})).relative_residual);
        double ord = std::min(std::log2(e[0] / e[1]), std::log2(e[1] / e[2]));
        std::printf("    %-22s refinement 32/64/128: %.2e %.2e %.2e, order %.2f\n", name.c_str(), e[0], e[1], e[2], ord);
        o.need(ord >= 2, name + " order " + fmt("%.2f", ord));
        worst_order = std::min(worst_order, ord);
    }
    if (o.detail.empty()) o.detail = "worst residual " + fmt("%.2e", worst) + ", min order " + fmt("%.2f", worst_order);
    return o;
}

// AC2
Outcome localization() {
    Outcome o;
    auto b = make_bundle(variable_k(), 65, 32);
    const std::vector<std::pair<int, int>> pairs = {{0, 1}, {0, 2}, {1, 2}, {1, 3}, {2, 3},
                                                    {2, 4}, {3, 5}, {0, 4}, {1, 5}, {4, 5}};
    double worst = 0;
    for (auto [m, l] : pairs) {
        CrossTerm c = localization_crossterm(make_test_field(b, 1, 100 + m, {m}), make_test_field(b, 1, 200 + l, {l}));
        worst = std::max(worst, c.relative());
    }
    o.need(worst <= 1e-6, "cross term " + fmt("%.2e", worst));
    double sum = 0, loc = 0;
    for (std::uint64_t sd = 1; sd <= 3; ++sd) {
        SMField u = make_test_field(b, 1, sd, {0, 1, 2, 3, 4, 5});
        LocalizationSum ls = localization_sum(u);
        sum = std::max({sum, ls.totals_error, ls.vx_error});
        FourierModes M = fourier_modes(u);
        for (int l = 0; l <= 5; ++l) loc = std::max(loc, pestov_localized_report(M, l).relative_residual);
    }
    o.need(sum <= 1e-8, "localized sum " + fmt("%.2e", sum));
    o.need(loc <= 1e-3, "localized identity " + fmt("%.2e", loc));
    if (o.detail.empty())
        o.detail = "cross terms " + fmt("%.2e", worst) + ", sum " + fmt("%.2e", sum) + ", localized " + fmt("%.2e", loc);
    return o;
}

// AC3
Outcome carleman_log() {
    Outcome o;
    auto s = ConformalSurface::scaled_hyperbolic(1, 0.6);
    auto b = make_bundle(s, 64, 32);
    const std::vector<double> taus = {1, 2, 4, 8};
    double worst = 0;
    bool margin_mono = true, ratio_vs_tau1 = true;
    for (auto sd : seeds20()) {
        SMField u = make_test_field(b, 1, sd, {0, 1, 2, 3, 4, 5});
        for (int m : {1, 2, 3}) {
            double prev = -INFINITY, r1 = 0;
            for (double tau : taus) {
                IdentityReport r = carleman_log_report(u, tau, m, 1);
                worst = std::max(worst, r.ratio);
                o.need(r.pass, "seed " + std::to_string(sd) + " fails");
                margin_mono = margin_mono && r.rhs - r.lhs >= prev;
                prev = r.rhs - r.lhs;
                if (tau == 1) r1 = r.ratio;
                ratio_vs_tau1 = ratio_vs_tau1 && r.ratio <= r1;
            }
        }
    }
    o.need(worst <= 1, "ratio " + fmt("%.3g", worst));
    o.need(margin_mono, "margin RHS - LHS not monotone in tau");
    std::printf("    info: ratio(tau) <= ratio(1) for every (seed, m): %s\n", ratio_vs_tau1 ? "yes" : "no");
    if (o.detail.empty()) o.detail = "max ratio " + fmt("%.3g", worst) + ", margin RHS - LHS nondecreasing in tau";
    return o;
}

// AC4
Outcome carleman_linear() {
    Outcome o;
    auto b = make_bundle(ConformalSurface::euclidean(1), 64, 32);
    const double tau = 1;
    NonpositiveWeights nw = nonpositive_weight_coeffs(2, tau, 0.5, 10000, 10);
    o.need(!nonpositive_weight_coeffs(2, 0.5, 0.5, 10000, 10).admissible, "gate accepted tau = 0.5");
    bool refused = false;
    try {
        carleman_linear_report(SMField(b, 1), 0.5, nw.m0, 1);
    } catch (const ConfigError&) {
        refused = true;
    }
    o.need(refused, "tau = 0.5 not refused");
    o.need(nw.admissible, "tau = 1 rejected");
    KappaAlphaOptions ko;
    ko.samples = 200;
    KappaAlpha ka = estimate_kappa_alpha(b, ko);
    o.need(ka.kappa > 0, "no positive kappa");
    double worst = 0;
    for (auto sd : seeds20()) {
        IdentityReport r = carleman_linear_report(make_test_field(b, 1, sd, {0, 1, 2, 3, 4, 5}), tau, nw.m0, ka.kappa);
        worst = std::max(worst, r.ratio);
        o.need(r.pass, "seed " + std::to_string(sd) + " fails");
    }
    if (o.detail.empty())
        o.detail = "kappa " + fmt("%.3g", ka.kappa) + ", alpha " + fmt("%.2f", ka.alpha) + ", m0 " +
                   std::to_string(nw.m0) + ", max ratio " + fmt("%.3g", worst);
    return o;
}

// AC5
Outcome shifted() {
    Outcome o;
    auto b = make_bundle(ConformalSurface::scaled_hyperbolic(1, 0.6), 64, 32);
    double worst = 0;
    for (auto sd : seeds20()) {
        SMField u = make_test_field(b, 1, sd, {0, 1, 2, 3, 4, 5});
        for (double s : {0.0, 1.0, 2.0}) {
            IdentityReport r = shifted_pestov_report(u, s, 1);
            worst = std::max(worst, r.ratio);
            o.need(r.pass, "seed " + std::to_string(sd) + " s " + fmt("%g", s));
            if (s == 0)
                o.need(r.term("||Xu||^2+||X_perp u||^2+||Vu||^2") <= r.term("2C^2||VXu||^2"),
                       "unweighted inequality, seed " + std::to_string(sd));
        }
    }
    if (o.detail.empty()) o.detail = "max ratio " + fmt("%.3g", worst);
    return o;
}

// AC6
Outcome weights() {
    Outcome o;
    auto t0 = std::chrono::steady_clock::now();
    long bad = 0;
    for (long d = 2; d <= 10; ++d)
        for (long l = 1; l <= 10000; ++l) bad += miraculous_residual(l, d) != 0;
    o.need(bad == 0, std::to_string(bad) + " nonzero residuals");
    for (long d = 2; d <= 10; ++d)
        for (long two_s : {0, 1, 2, 4, 8}) {
            DenominatorCheck dc = denominator_bound_check(d, two_s, 10000);
            o.need(dc.bound_ok && dc.ratio_ok, "Eq. 5.3 d " + std::to_string(d) + " 2s " + std::to_string(two_s));
        }
    double margin = INFINITY;
    for (double s : {0.25, 0.5, 1.0, 1.5, 2.5, 7.0})
        for (long l = 1; l <= 10000; ++l) margin = std::min(margin, elementary_bound_check(l, s).margin);
    o.need(margin >= 0, "Lemma 5.8 margin " + fmt("%.3g", margin));
    for (long d : {2, 3, 5})
        for (double s : {0.0, 1.0, 4.0}) {
            OptimalConstant c = optimal_constant_estimate(d, s, 1);
            o.need(c.value >= 1 / (2 * s + 1) - 1e-12 && c.value <= (d + 4.0) * (d + 4.0) / (2 * s + 1),
                   "sandwich d " + std::to_string(d) + " s " + fmt("%g", s));
        }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.need(secs <= 30, "runtime " + fmt("%.0f s", secs));
    if (o.detail.empty()) o.detail = "exact, min Lemma 5.8 margin " + fmt("%.3g", margin) + ", " + fmt("%.1f s", secs);
    return o;
}

// AC7
Outcome scattering() {
    Outcome o;
    auto s = ConformalSurface::euclidean(1);
    Grid2D g = make_bundle(s, 129, 8)->grid();
    FanSpec fan;
    fan.n_beta = 36;
    fan.n_alpha = 12;
    double worst = 0;
    for (std::uint64_t sd = 1; sd <= 10; ++sd) {
        AttenuationOptions ao;
        ao.unitary = sd % 3 == 0;
        AttenuationPair A = random_attenuation(g, 2, 1, 100 + sd, ao);
        AttenuationPair B = gauge_transform(A, random_gauge(g, 2, 0.9, 0.5, 200 + sd));
        worst = std::max(worst, scattering_rigidity_probe(s, A, B, fan).D);
    }
    o.need(worst <= 1e-5, "gauge " + fmt("%.2e", worst));
    AttenuationOptions ab;
    ab.a_scale = 0;
    double abel = abelian_scattering_error(s, random_attenuation(g, 1, 1, 7, ab), fan);
    o.need(abel <= 1e-6, "abelian " + fmt("%.2e", abel));
    if (o.detail.empty()) o.detail = "gauge " + fmt("%.2e", worst) + ", abelian " + fmt("%.2e", abel);
    return o;
}

// AC8
Outcome absorption() {
    Outcome o;
    AbsorptionReplay a = absorption_replay(AbsorptionOptions{});
    o.need(a.tail <= 2 * a.floor, "tail " + fmt("%.2e", a.tail) + " > 2 floor " + fmt("%.2e", 2 * a.floor));
    o.need(a.CR_over_tau <= 0.5, "CR/tau");
    o.need(a.carleman.pass, "Carleman bound");
    o.need(a.ray_pass, "ray-recovered tail");
    if (o.detail.empty())
        o.detail = "m " + std::to_string(a.m) + ", tau " + fmt("%.3g", a.tau) + ", tail " + fmt("%.2e", a.tail) +
                   " vs floor " + fmt("%.2e", a.floor);
    return o;
}

// AC9
Outcome injectivity() {
    Outcome o;
    auto t0 = std::chrono::steady_clock::now();
    auto s = ConformalSurface::scaled_hyperbolic(1, 0.6);
    BundleP b = make_bundle(s, 96, 8);
    AttenuationPair att = random_attenuation(b->grid(), 2, s.radius(), 21);
    FanSpec fan;
    fan.interlace = 4;
    TransportOptions to{0.02};
    XrayOperator op(s, &att, b->grid(), 2, 0, fan, to);

    std::mt19937_64 rng(1001);
    std::normal_distribution<double> N01;
    TensorSource f(b->grid(), 2, 0);
    for (auto& c : f.c) c = cd(N01(rng), N01(rng));
    BoundaryFan g(fan, 2, 1);
    for (auto& c : g.values) c = cd(N01(rng), N01(rng));
    BoundaryFan Ff = op.forward(f);
    double adj = std::abs(op.fan_inner(Ff, g) - op.src_inner(f, op.adjoint(g))) / std::sqrt(op.fan_norm2(Ff) * op.fan_norm2(g));
    o.need(adj <= 1e-6, "adjoint " + fmt("%.2e", adj));

    SMField u = make_test_field(b, 2, 22, {0});
    BoundaryFan data = xray_transform(s, &att, u, fan, {0.005});
    CglsOptions co;
    co.iters = 200;
    CglsResult r = cgls_reconstruct(op, data, co);
    double err = relative_error(s, r.f, tensor_source(u, 0));
    o.need(!r.diverged, "CGLS diverged");
    o.need(err <= 0.05, "relative error " + fmt("%.4f", err));
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.need(secs <= 600, "runtime " + fmt("%.0f s", secs));
    std::printf("    adjoint %.2e, %d iterations, relative error %.4f, %.0f s\n", adj, r.iterations, err, secs);
    if (o.detail.empty()) o.detail = "relative error " + fmt("%.4f", err) + ", adjoint " + fmt("%.2e", adj);
    return o;
}

// AC10
Outcome riccati() {
    Outcome o;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U01;
    struct Case {
        ConformalSurface s;
        double kappa;  // NAN: no closed form
    };
    const std::vector<Case> cases = {{ConformalSurface::euclidean(1), 0},
                                     {ConformalSurface::poincare(0.7), 1},
                                     {ConformalSurface::scaled_hyperbolic(4, 0.6), 4},
                                     {variable_k(), NAN}};
    double res = 0, cf = 0, gap = INFINITY;
    for (const auto& c : cases)
        for (int i = 0; i < 100; ++i) {
            double r = 0.8 * c.s.radius() * std::sqrt(U01(rng)), ph = kTwoPi * U01(rng);
            RiccatiTrace tr = riccati_solutions(c.s, {r * std::cos(ph), r * std::sin(ph), kTwoPi * U01(rng)});
            res = std::max(res, riccati_residual(tr));
            if (!std::isnan(c.kappa)) cf = std::max(cf, riccati_closed_form_error(tr, c.kappa));
            for (int k = tr.first; k <= tr.last; ++k) gap = std::min(gap, tr.u_plus[k] - tr.u_minus[k]);
        }
    o.need(res <= 1e-6, "residual " + fmt("%.2e", res));
    o.need(cf <= 1e-6, "closed form " + fmt("%.2e", cf));
    o.need(gap > 0, "U+ - U- " + fmt("%.3g", gap));
    double green = 0;
    auto e = make_bundle(ConformalSurface::euclidean(1), 96, 48);
    auto p = make_bundle(ConformalSurface::poincare(0.7), 64, 32);
    for (GreenSide w : {GreenSide::plus, GreenSide::minus}) {
        green = std::max(green, green_identity_residual(make_test_field(e, 1, 3, {0, 1, 2}), nullptr, w).relative_residual);
        green = std::max(green, green_identity_residual(make_test_field(p, 1, 4, {0, 1, 2}), nullptr, w).relative_residual);
    }
    o.need(green <= 5e-3, "Green " + fmt("%.2e", green));
    if (o.detail.empty())
        o.detail = "residual " + fmt("%.2e", res) + ", closed form " + fmt("%.2e", cf) + ", min gap " + fmt("%.3g", gap) +
                   ", Green " + fmt("%.2e", green);
    return o;
}

// AC11
Outcome projective() {
    Outcome o;
    const double R = 0.8;
    Grid2D g{64, R * 1.05};
    AttenuationOptions ao;
    ao.phi_scale = 0;
    AttenuationPair A = random_attenuation(g, 2, R, 5, ao);
    FanSpec fan;
    fan.n_beta = 24;
    fan.n_alpha = 8;
    double worst = 0;
    for (int k : {0, 1, 2}) {
        ProjectiveTransfer t = projective_transfer(R, A, k, 10 + k, fan);
        worst = std::max(worst, t.max_rel);
        if (k == 1) worst = std::max(worst, t.scattering_max);
    }
    o.need(worst <= 1e-4, "transfer " + fmt("%.2e", worst));
    PlaneMetric E = PlaneMetric::conformal(ConformalSurface::euclidean(R)), K = PlaneMetric::klein(),
                P = PlaneMetric::conformal(ConformalSurface::poincare(R));
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> U01;
    double drift = 0, control = INFINITY;
    for (int i = 0; i < 20; ++i) {
        double r = 0.7 * R * std::sqrt(U01(rng)), ph = kTwoPi * U01(rng), th = kTwoPi * U01(rng);
        MState st{r * std::cos(ph), r * std::sin(ph), std::cos(th), std::sin(th)};
        drift = std::max({drift, first_integral_drift(E, K, st, R, 0.01), first_integral_drift(K, E, st, R, 0.01)});
        control = std::min(control, first_integral_drift(E, P, st, R, 0.01));
    }
    o.need(drift <= 1e-5, "drift " + fmt("%.2e", drift));
    o.need(control >= 1e-2, "Poincare control " + fmt("%.2e", control));
    if (o.detail.empty())
        o.detail = "transfer " + fmt("%.2e", worst) + ", drift " + fmt("%.2e", drift) + ", control " + fmt("%.3g", control);
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"AC1 Pestov identity", pestov},
        {"AC2 frequency localization", localization},
        {"AC3 Carleman, logarithmic weights", carleman_log},
        {"AC4 Carleman, linear weights", carleman_linear},
        {"AC5 shifted Pestov", shifted},
        {"AC6 weight arithmetic", weights},
        {"AC7 transport and scattering", scattering},
        {"AC8 degree absorption", absorption},
        {"AC9 injectivity demo", injectivity},
        {"AC10 Riccati and Green", riccati},
        {"AC11 projective equivalence", projective}};
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        std::printf("%s\n", name.c_str());
        std::fflush(stdout);
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
        failed += !o.pass;
    }
    std::printf("%d/%zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
    return failed ? 1 : 0;
}
