#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "spce/feasibility.hpp"
#include "spce/lrhvm.hpp"
#include "spce/switching.hpp"

using namespace spce;

namespace {

constexpr double pi = std::numbers::pi;

// Pairwise family with zero marginals and the given correlations.
PairwiseFamily family_from_correlations(const std::array<double, 4>& e) {
    PairwiseFamily f{};
    for (std::size_t k = 0; k < 4; ++k) {
        f[k] = {{{(1 + e[k]) / 4, (1 - e[k]) / 4}, {(1 - e[k]) / 4, (1 + e[k]) / 4}}};
    }
    return f;
}

// For zero-marginal families, embedding holds iff all eight CHSH forms are
// at most 2: each of the four sign placements, with both overall signs.
bool fine_criterion(const std::array<double, 4>& e) {
    const double s[4] = {e[0] + e[1] + e[2] - e[3], e[0] + e[1] - e[2] + e[3],
                         e[0] - e[1] + e[2] + e[3], -e[0] + e[1] + e[2] + e[3]};
    for (double v : s) {
        if (std::abs(v) > 2 + 1e-9) {
            return false;
        }
    }
    return true;
}

PairwiseFamily family_of_table(const JointOutcomeTable& t) {
    PairwiseFamily f{};
    for (int i = 1; i <= 2; ++i) {
        for (int j = 1; j <= 2; ++j) {
            const auto m = t.marginal(i, j);
            auto& p = f[(i - 1) * 2 + (j - 1)];
            p = {{{m[2][2], m[2][0]}, {m[0][2], m[0][0]}}};
        }
    }
    return f;
}

std::vector<SwitchRecord> tsirelson_run(std::uint64_t n, const char* label) {
    auto rng = derive_stream(2024, label);
    return switching_simulate(singlet_targets(0, pi / 4, pi / 8, 3 * pi / 8), uniform_settings(), n,
                              rng);
}

} // namespace

TEST(SwitchRecord, BitLayoutRoundTrip) {
    for (int i = 1; i <= 2; ++i) {
        for (int j = 1; j <= 2; ++j) {
            for (int a : {1, -1}) {
                for (int b : {1, -1}) {
                    const auto r = SwitchRecord::make(i, j, a, b);
                    r.validate();
                    EXPECT_EQ(SwitchRecord::from_bits(r.to_bits()), r);
                    EXPECT_LE(std::popcount(unsigned(r.to_bits())), 4);
                    EXPECT_EQ(r.value_a(), a);
                    EXPECT_EQ(r.value_b(), b);
                }
            }
        }
    }
    // setting (2,1), Alice detector 2 of PBS 2, Bob detector 1 of PBS 1
    EXPECT_EQ(SwitchRecord::make(2, 1, -1, 1).to_bits(), 0b0001'1000'01);
}

TEST(SwitchRecord, InvalidRecords) {
    SwitchRecord r = SwitchRecord::make(1, 1, 1, 1);
    r.clicks_a = {0, 0, 1, 0};  // click on the PBS not selected
    EXPECT_THROW(r.validate(), InvalidSpec);
    r.clicks_a = {1, 1, 0, 0};
    EXPECT_THROW(r.validate(), InvalidSpec);
    r.clicks_a = {0, 0, 0, 0};
    EXPECT_THROW(r.validate(), InvalidSpec);
    EXPECT_THROW(SwitchRecord::from_bits(0), InvalidSpec);
}

TEST(SwitchingSimulate, AnticorrelatedTargets) {
    auto rng = derive_stream(1, "sw/anti");
    const auto rec = switching_simulate(anticorrelated_targets(), uniform_settings(), 10000, rng);
    for (const auto& r : rec) {
        r.validate();
        EXPECT_EQ(r.value_a(), -r.value_b());
    }
    for (int i = 1; i <= 2; ++i) {
        for (int j = 1; j <= 2; ++j) {
            EXPECT_EQ(switching_conditional_expectation(rec, i, j).value, -1.0);
        }
    }
}

TEST(SwitchingSimulate, SingletTargetsReproduced) {
    const auto rec = tsirelson_run(1000000, "sw/singlet");
    const double as[2] = {0, pi / 4}, bs[2] = {pi / 8, 3 * pi / 8};
    for (int i = 1; i <= 2; ++i) {
        for (int j = 1; j <= 2; ++j) {
            const auto e = switching_conditional_expectation(rec, i, j);
            EXPECT_NEAR(e.value, -std::cos(2 * (as[i - 1] - bs[j - 1])), 3 * e.se);
        }
    }
}

TEST(SwitchingSimulate, DegenerateSettingDistribution) {
    auto rng = derive_stream(2, "sw/deg");
    const auto rec = switching_simulate(anticorrelated_targets(),
                                        DiscreteDistribution<SettingIndexPair>::point_mass({1, 1}),
                                        1000, rng);
    for (const auto& r : rec) {
        EXPECT_EQ(r.setting_a, 1);
        EXPECT_EQ(r.setting_b, 1);
    }
    EXPECT_THROW(switching_conditional_expectation(rec, 2, 2), UndefinedEstimate);
}

TEST(SwitchingSimulate, RejectsNonNormalisedTargets) {
    auto bad = anticorrelated_targets();
    bad[2][0][1] = 0.6;
    auto rng = derive_stream(3, "sw/bad");
    EXPECT_THROW(switching_simulate(bad, uniform_settings(), 10, rng), InvalidSpec);
    bad = anticorrelated_targets();
    bad[0] = {{{1.2, -0.2}, {0, 0}}};
    EXPECT_THROW(switching_simulate(bad, uniform_settings(), 10, rng), InvalidSpec);
}

TEST(SwitchingRandomVariable, SettingMatching) {
    const auto r = SwitchRecord::make(1, 2, -1, 1);
    const auto both = switching_random_variable(r, 1, 2);
    EXPECT_EQ(both, std::make_pair(-1, 1));
    EXPECT_EQ(switching_random_variable(r, 2, 1), std::make_pair(0, 0));
    const auto alice_only = switching_random_variable(r, 1, 1);
    EXPECT_EQ(alice_only.first, -1);
    EXPECT_EQ(alice_only.second, 0);
}

TEST(SwitchingConditional, ChshReachesTsirelson) {
    const auto rec = tsirelson_run(1000000, "sw/chsh");
    const auto e11 = switching_conditional_expectation(rec, 1, 1);
    const auto e12 = switching_conditional_expectation(rec, 1, 2);
    const auto e21 = switching_conditional_expectation(rec, 2, 1);
    const auto e22 = switching_conditional_expectation(rec, 2, 2);
    const double s = std::abs(e11.value - e12.value) + std::abs(e21.value + e22.value);
    const double se = std::sqrt(e11.se * e11.se + e12.se * e12.se + e21.se * e21.se + e22.se * e22.se);
    EXPECT_NEAR(s, 2 * std::sqrt(2.0), 3 * se);
}

TEST(SwitchingConditional, UnconditionalIsShrunkBySettingProbability) {
    const auto rec = tsirelson_run(200000, "sw/uncond");
    for (int i = 1; i <= 2; ++i) {
        for (int j = 1; j <= 2; ++j) {
            const auto c = switching_conditional_expectation(rec, i, j);
            const auto u = switching_unconditional_expectation(rec, i, j);
            // exact identity: sum over matching records / N = (n_ij / N) * conditional mean
            const double frac = static_cast<double>(c.n) / rec.size();
            EXPECT_NEAR(u.value, frac * c.value, 1e-12);
            EXPECT_NEAR(frac, 0.25, 3 * std::sqrt(0.25 * 0.75 / rec.size()));
        }
    }
}

TEST(SwitchingMeasure, IsAProbabilityMeasure) {
    const auto rec = tsirelson_run(50000, "sw/measure");
    double total = 0;
    for (const auto& [bits, p] : switching_record_measure(rec)) {
        EXPECT_GE(p, 0.0);
        EXPECT_NO_THROW(SwitchRecord::from_bits(bits));
        total += p;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(SwitchingNoSignalling, AliceMarginalIgnoresBobSetting) {
    const auto rec = tsirelson_run(400000, "sw/nosig");
    for (int i = 1; i <= 2; ++i) {
        std::vector<double> v[2];
        for (const auto& r : rec) {
            if (r.setting_a == i) {
                v[r.setting_b - 1].push_back(r.value_a());
            }
        }
        const auto m1 = estimate_mean(v[0]);
        const auto m2 = estimate_mean(v[1]);
        EXPECT_LE(std::abs(m1.value - m2.value), 3 * std::hypot(m1.se, m2.se));
    }
}

TEST(Feasibility, TsirelsonFamilyIsNotEmbeddable) {
    const auto exact = embeds_in_joint(singlet_targets(0, pi / 4, pi / 8, 3 * pi / 8));
    EXPECT_FALSE(exact.embeddable);
    EXPECT_GT(exact.infeasibility, 0.1);
    const auto rec = tsirelson_run(1000000, "sw/embed");
    EXPECT_FALSE(embeds_in_joint(switching_conditional_family(rec)).embeddable);
}

TEST(Feasibility, MarginalsOfAJointAlwaysEmbed) {
    auto rng = derive_stream(4, "feas/joint");
    for (int k = 0; k < 200; ++k) {
        const auto t = JointOutcomeTable::random(OutcomeAlphabet::binary, rng);
        const auto r = embeds_in_joint(family_of_table(t));
        EXPECT_TRUE(r.embeddable) << r.infeasibility;
    }
    // deterministic strategies
    for (std::size_t k = 0; k < 16; ++k) {
        const auto t = JointOutcomeTable::point_mass(
            OutcomeAlphabet::binary, JointOutcomeTable::vector_at(OutcomeAlphabet::binary, k));
        EXPECT_TRUE(embeds_in_joint(family_of_table(t)).embeddable);
    }
}

TEST(Feasibility, AgreesWithCorrelationCriterion) {
    auto rng = derive_stream(5, "feas/fine");
    int embeddable = 0, not_embeddable = 0;
    for (int k = 0; k < 500; ++k) {
        std::array<double, 4> e{};
        for (double& v : e) {
            v = rng.uniform(-1, 1);
        }
        const auto f = family_from_correlations(e);
        const bool expected = fine_criterion(e);
        EXPECT_EQ(embeds_in_joint(f).embeddable, expected) << k;
        EXPECT_NEAR(max_chsh_expression(f) <= 2 + 1e-9, expected, 0);
        (expected ? embeddable : not_embeddable)++;
    }
    EXPECT_GT(embeddable, 50);
    EXPECT_GT(not_embeddable, 50);
}

TEST(Feasibility, PrBoxIsMaximallyInfeasible) {
    const auto f = family_from_correlations({1, 1, 1, -1});
    EXPECT_FALSE(embeds_in_joint(f).embeddable);
    EXPECT_NEAR(max_chsh_expression(f), 4.0, 1e-12);
}
