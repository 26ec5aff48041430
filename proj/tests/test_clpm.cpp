#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <type_traits>

#include "spce/clpm.hpp"
#include "spce/inference.hpp"
#include "spce/pairing.hpp"

using namespace spce;

namespace {

constexpr double pi = std::numbers::pi;

SettingPair angles(int i, int j, double a, double b) { return {i, j, a, b}; }

ClpmSpec constant_spec(int a, int b) {
    return {[](RngStream& r) { return SourcePair{{r.uniform(), r.uniform()}, {r.uniform(), 0}}; },
            [](RngStream& r) { return ApparatusParams{r.uniform(), 0}; },
            [](RngStream& r) { return ApparatusParams{r.uniform(), 0}; },
            [a](const SignalParams&, const ApparatusParams&, double) { return a; },
            [b](const SignalParams&, const ApparatusParams&, double) { return b; },
            {},
            {},
            1.0};
}

// Two source points: weight p with A = B = +1, weight 1 - p with A = -B.
FiniteClpm two_point(double p) {
    std::vector<SourcePair> src{{{0, 0}, {0, 0}}, {{1, 0}, {1, 0}}};
    auto resp_a = [](const SignalParams&, const ApparatusParams&, double) { return 1; };
    auto resp_b = [](const SignalParams& s, const ApparatusParams&, double) {
        return s.angle == 0 ? 1 : -1;
    };
    return {DiscreteDistribution<SourcePair>(src, {p, 1 - p}),
            DiscreteDistribution<ApparatusParams>::point_mass({0, 0}),
            DiscreteDistribution<ApparatusParams>::point_mass({0, 0}),
            resp_a,
            resp_b,
            {},
            {},
            1.0};
}

std::vector<double> products(const EventStreams& ev) {
    std::vector<double> out;
    for (std::size_t t = 0; t < ev.alice.size(); ++t) {
        out.push_back(ev.alice[t].outcome * ev.bob[t].outcome);
    }
    return out;
}

} // namespace

// The response signature admits exactly (local signal, local apparatus,
// local setting); nothing remote can be passed in.
static_assert(std::is_invocable_r_v<int, Response, SignalParams, ApparatusParams, double>);
static_assert(!std::is_invocable_v<Response, SignalParams, ApparatusParams, double, double>);
static_assert(!std::is_invocable_v<Response, SourcePair, ApparatusParams, double>);

TEST(ClpmSimulate, ConstantResponses) {
    auto rng = derive_stream(1, "clpm/const");
    const auto ev = clpm_simulate(constant_spec(1, 1), angles(1, 1, 0, 0), 1000, rng);
    for (std::size_t t = 0; t < 1000; ++t) {
        EXPECT_EQ(ev.alice[t].outcome, 1);
        EXPECT_EQ(ev.bob[t].outcome, 1);
        // no time tagger: emission index
        EXPECT_EQ(ev.alice[t].time_tag, double(t));
    }
}

TEST(ClpmSimulate, Errors) {
    auto rng = derive_stream(1, "clpm/err");
    EXPECT_THROW(clpm_simulate(constant_spec(1, 1), {}, 0, rng), InvalidSpec);
    EXPECT_THROW(clpm_simulate(constant_spec(2, 1), {}, 10, rng), InvalidSpec);
    ClpmSpec broken = constant_spec(1, 1);
    broken.response_b = nullptr;
    EXPECT_THROW(clpm_simulate(broken, {}, 10, rng), InvalidSpec);
    PhotonKernelParams p;
    p.emission_spacing = 0.5;
    EXPECT_THROW(photon_kernel(p), InvalidSpec);
    p = {};
    p.window = 0;
    EXPECT_THROW(photon_kernel(p), InvalidSpec);
    p = {};
    p.threshold_spread = 0.7;
    EXPECT_THROW(photon_kernel(p), InvalidSpec);
}

TEST(ClpmSimulate, DefaultKernelSinglesAreUnbiased) {
    const auto spec = photon_kernel();
    for (double a : {0.0, pi / 8, pi / 4}) {
        auto rng = derive_stream(2, "clpm/singles");
        const auto ev = clpm_simulate(spec, angles(1, 1, a, 0.3), 100000, rng);
        for (const auto* side : {&ev.alice, &ev.bob}) {
            std::vector<double> v;
            for (const auto& e : *side) {
                v.push_back(e.outcome);
            }
            const auto m = estimate_mean(v);
            EXPECT_LE(std::abs(m.value), 3 * m.se);
        }
    }
}

TEST(ClpmSimulate, CoincidentCorrelationsTrackSinglet) {
    const auto spec = photon_kernel();
    const PhotonKernelParams p;
    const double as[2] = {0, pi / 4};
    const double bs[2] = {pi / 8, 3 * pi / 8};
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            auto rng = derive_stream(3, "clpm/coinc/" + std::to_string(i) + std::to_string(j));
            const auto ev = clpm_simulate(spec, angles(i + 1, j + 1, as[i], bs[j]), 1000000, rng);
            const auto pairs = pair_window(ev.alice, ev.bob, {p.window, WindowRule::first_match_greedy});
            const auto e = correlation_estimate(pairs, ZeroPolicy::coincident_only);
            EXPECT_NEAR(e.value, -std::cos(2 * (as[i] - bs[j])), 0.03);
        }
    }
}

TEST(ClpmExact, SimulationMatchesEnumeration) {
    const auto m = photon_kernel_grid({}, {36, 2, 4, 1});
    const auto spec = m.spec();
    auto rng = derive_stream(4, "clpm/exact");
    for (double b : {0.0, pi / 8, 0.9}) {
        const auto ev = clpm_simulate(spec, angles(1, 1, 0.2, b), 50000, rng);
        const auto e = estimate_mean(products(ev));
        EXPECT_LE(std::abs(e.value - clpm_expectation_exact(m, 0.2, b)), 3 * e.se);
    }
}

TEST(ClpmExact, JointTableAgreesWithExpectation) {
    const auto m = photon_kernel_grid({}, {72, 2, 4, 1});
    const auto p = clpm_exact_joint(m, 0.1, 0.5);
    double total = 0, e = 0;
    for (int a = -1; a <= 1; ++a) {
        for (int b = -1; b <= 1; ++b) {
            total += p[a + 1][b + 1];
            e += a * b * p[a + 1][b + 1];
        }
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_NEAR(e, clpm_expectation_exact(m, 0.1, 0.5), 1e-12);
}

TEST(ClpmExact, AllZeroResponses) {
    auto m = two_point(0.3);
    m.response_a = [](const SignalParams&, const ApparatusParams&, double) { return 0; };
    m.response_b = m.response_a;
    EXPECT_EQ(clpm_expectation_exact(m, 0, 0), 0.0);
}

TEST(ClpmExact, TwoPointLambda) {
    for (double p : {0.0, 0.25, 0.6, 1.0}) {
        EXPECT_NEAR(clpm_expectation_exact(two_point(p), 0, 0), 2 * p - 1, 1e-15);
    }
}

TEST(ClpmExact, DefaultGridMatchesHalfCosineForFullSample) {
    // Zero-inclusive correlation of the default kernel, full sample; the
    // threshold flattens it well below the singlet curve.
    const auto m = photon_kernel_grid();
    for (double d : {0.0, pi / 8, pi / 4, 3 * pi / 8}) {
        const double e = clpm_expectation_exact(m, 0, d);
        EXPECT_LE(std::abs(e), std::abs(std::cos(2 * d)) + 1e-12);
    }
    EXPECT_NEAR(clpm_marginal_exact(m, Side::alice, 0.3), 0.0, 1e-12);
    EXPECT_NEAR(clpm_marginal_exact(m, Side::bob, 1.2), 0.0, 1e-12);
}

TEST(ClpmExact, MarginalsIndependentOfRemoteSetting) {
    const auto m = photon_kernel_grid({}, {90, 2, 4, 1});
    for (double a : {0.0, 0.4}) {
        double ma[2] = {0, 0};
        int k = 0;
        for (double b : {0.1, 1.3}) {
            const auto p = clpm_exact_joint(m, a, b);
            ma[k++] = (p[2][0] + p[2][1] + p[2][2]) - (p[0][0] + p[0][1] + p[0][2]);
        }
        EXPECT_NEAR(ma[0], ma[1], 1e-12);
    }
}

TEST(ClpmMarginalized, KEqualsOneReproducesPerEmissionProducts) {
    const auto spec = photon_kernel();
    const auto s = angles(1, 2, 0.0, 3 * pi / 8);
    auto r1 = derive_stream(5, "clpm/k1");
    auto r2 = derive_stream(5, "clpm/k1");
    const auto run = clpm_marginalized_run(spec, s, 20000, 1, r1);
    const auto ev = clpm_simulate(spec, s, 20000, r2);
    EXPECT_EQ(run.outputs, products(ev));
}

TEST(ClpmMarginalized, AveragingGivesFractionalOutputsWithSameMean) {
    const auto spec = photon_kernel();
    const auto grid = photon_kernel_grid();
    auto rng = derive_stream(6, "clpm/k100");
    const auto run = clpm_marginalized_run(spec, angles(1, 1, 0, pi / 8), 10000, 100, rng);
    EXPECT_LE(std::abs(run.estimate.value - clpm_expectation_exact(grid, 0, pi / 8)),
              3 * run.estimate.se);
    bool fractional = false;
    for (double o : run.outputs) {
        EXPECT_GE(o, -1.0);
        EXPECT_LE(o, 1.0);
        fractional = fractional || (o != -1 && o != 0 && o != 1);
    }
    EXPECT_TRUE(fractional);
}

TEST(ClpmMarginalized, ApparatusIndependentResponsesGiveProducts) {
    auto m = two_point(0.4);
    m.apparatus_a = DiscreteDistribution<ApparatusParams>::uniform({{0, 0}, {0.5, 0}, {1, 0}});
    const auto spec = m.spec();
    for (std::uint64_t k : {1u, 7u, 50u}) {
        auto rng = derive_stream(7, "clpm/det");
        const auto run = clpm_marginalized_run(spec, {}, 2000, k, rng);
        for (double o : run.outputs) {
            EXPECT_TRUE(o == 1.0 || o == -1.0);
        }
    }
    auto rng = derive_stream(7, "clpm/det");
    EXPECT_THROW(clpm_marginalized_run(spec, {}, 10, 0, rng), InvalidSpec);
}

TEST(ClpmNoSignalling, AliceSinglesIgnoreBobSetting) {
    const auto spec = photon_kernel();
    for (double a : {0.0, pi / 4}) {
        CorrelationEstimate m[2];
        int k = 0;
        for (double b : {pi / 8, 3 * pi / 8}) {
            auto rng = derive_stream(8, "clpm/nosig/" + std::to_string(k));
            const auto ev = clpm_simulate(spec, angles(1, k + 1, a, b), 100000, rng);
            std::vector<double> v;
            for (const auto& e : ev.alice) {
                v.push_back(e.outcome);
            }
            m[k++] = estimate_mean(v);
        }
        EXPECT_LE(std::abs(m[0].value - m[1].value), 3 * std::hypot(m[0].se, m[1].se));
    }
}

TEST(ClpmGrid, ResolutionErrors) {
    EXPECT_THROW(photon_kernel_grid({}, {0, 1, 1, 1}), InvalidSpec);
}
