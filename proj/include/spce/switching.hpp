#pragma once

// A single Kolmogorov space for an experiment with randomly switched settings.
// Each side has two PBS with two detectors each; a trial records which setting
// pair was used and which detector clicked on each side. The A_i, B_j random
// variables are defined on the full record space and vanish when their
// setting was not used, so only conditional expectations reach the targets.

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "spce/error.hpp"
#include "spce/events.hpp"
#include "spce/feasibility.hpp"
#include "spce/quantum.hpp"
#include "spce/rng.hpp"

namespace spce {

/// Click bits indexed (pbs - 1) * 2 + (detector - 1). Detector 1 reads +1,
/// detector 2 reads -1.
struct SwitchRecord {
    int setting_a = 1;
    int setting_b = 1;
    std::array<std::uint8_t, 4> clicks_a{};
    std::array<std::uint8_t, 4> clicks_b{};

    bool operator==(const SwitchRecord&) const = default;

    void validate() const {
        check_side(setting_a, clicks_a, "alice");
        check_side(setting_b, clicks_b, "bob");
    }

    /// +-1 read off the clicked detector of each side.
    int value_a() const { return value(setting_a, clicks_a); }
    int value_b() const { return value(setting_b, clicks_b); }

    /// 10-bit layout, least significant first: bit 0 = (setting_a == 2),
    /// bit 1 = (setting_b == 2), bits 2..5 = Alice's clicks w11 w12 w21 w22,
    /// bits 6..9 = Bob's clicks w'11 w'12 w'21 w'22. At most four bits are set.
    std::uint16_t to_bits() const {
        std::uint16_t bits = 0;
        bits |= setting_a == 2 ? 1U : 0U;
        bits |= setting_b == 2 ? 2U : 0U;
        for (std::size_t k = 0; k < 4; ++k) {
            bits |= static_cast<std::uint16_t>(clicks_a[k] << (2 + k));
            bits |= static_cast<std::uint16_t>(clicks_b[k] << (6 + k));
        }
        return bits;
    }

    static SwitchRecord from_bits(std::uint16_t bits) {
        SwitchRecord r;
        r.setting_a = (bits & 1U) ? 2 : 1;
        r.setting_b = (bits & 2U) ? 2 : 1;
        for (std::size_t k = 0; k < 4; ++k) {
            r.clicks_a[k] = static_cast<std::uint8_t>((bits >> (2 + k)) & 1U);
            r.clicks_b[k] = static_cast<std::uint8_t>((bits >> (6 + k)) & 1U);
        }
        r.validate();
        return r;
    }

    static SwitchRecord make(int i, int j, int a, int b) {
        SwitchRecord r;
        r.setting_a = i;
        r.setting_b = j;
        r.clicks_a[click_index(i, a)] = 1;
        r.clicks_b[click_index(j, b)] = 1;
        return r;
    }

private:
    static std::size_t click_index(int pbs, int outcome) {
        return static_cast<std::size_t>((pbs - 1) * 2 + (outcome == 1 ? 0 : 1));
    }

    static void check_side(int setting, const std::array<std::uint8_t, 4>& clicks,
                           const char* side) {
        if (setting != 1 && setting != 2) {
            throw InvalidSpec(std::string("switch record: bad ") + side + " setting");
        }
        int set = 0;
        for (std::size_t k = 0; k < 4; ++k) {
            if (clicks[k] > 1) {
                throw InvalidSpec("switch record: click bits must be 0 or 1");
            }
            set += clicks[k];
        }
        if (set != 1) {
            throw InvalidSpec(std::string("switch record: ") + side +
                              " must have exactly one click");
        }
        const std::size_t base = static_cast<std::size_t>((setting - 1) * 2);
        if (clicks[base] + clicks[base + 1] != 1) {
            throw InvalidSpec(std::string("switch record: ") + side +
                              " click is on the PBS that was not selected");
        }
    }

    static int value(int setting, const std::array<std::uint8_t, 4>& clicks) {
        return clicks[static_cast<std::size_t>((setting - 1) * 2)] ? +1 : -1;
    }
};

using SettingIndexPair = std::pair<int, int>;

inline DiscreteDistribution<SettingIndexPair> uniform_settings() {
    return DiscreteDistribution<SettingIndexPair>::uniform({{1, 1}, {1, 2}, {2, 1}, {2, 2}});
}

inline void validate_family(const PairwiseFamily& family) {
    for (const auto& p : family) {
        double total = 0.0;
        for (const auto& row : p) {
            for (double v : row) {
                if (!(v >= 0.0)) {
                    throw InvalidSpec("switching target: negative probability");
                }
                total += v;
            }
        }
        if (std::abs(total - 1.0) > normalization_tolerance) {
            throw InvalidSpec("switching target: distribution does not sum to 1");
        }
    }
}

/// Singlet predictions P(a, b | a_i, b_j) at the given four angles.
inline PairwiseFamily singlet_targets(double a1, double a2, double b1, double b2) {
    const auto rho = quantum::singlet();
    const std::array<double, 2> as{a1, a2};
    const std::array<double, 2> bs{b1, b2};
    PairwiseFamily f{};
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            auto p = quantum::joint_probabilities(rho, as[i], bs[j]);
            double total = p[0][0] + p[0][1] + p[1][0] + p[1][1];
            for (auto& row : p) {
                for (double& v : row) {
                    v /= total;
                }
            }
            f[i * 2 + j] = p;
        }
    }
    return f;
}

inline PairwiseFamily anticorrelated_targets() {
    PairwiseFamily f{};
    for (auto& p : f) {
        p = {{{0.0, 0.5}, {0.5, 0.0}}};
    }
    return f;
}

/// Per trial: draw (i, j), then (a, b) from the target for (i, j).
inline std::vector<SwitchRecord> switching_simulate(const PairwiseFamily& targets,
                                                    const DiscreteDistribution<SettingIndexPair>& settings,
                                                    std::uint64_t n, RngStream& rng) {
    validate_family(targets);
    for (const auto& [i, j] : settings.support()) {
        if ((i != 1 && i != 2) || (j != 1 && j != 2)) {
            throw InvalidSpec("switching: setting indices must be 1 or 2");
        }
    }
    std::array<DiscreteDistribution<int>, 4> cell_dists{
        DiscreteDistribution<int>::normalized({0, 1, 2, 3}, {targets[0][0][0], targets[0][0][1], targets[0][1][0], targets[0][1][1]}),
        DiscreteDistribution<int>::normalized({0, 1, 2, 3}, {targets[1][0][0], targets[1][0][1], targets[1][1][0], targets[1][1][1]}),
        DiscreteDistribution<int>::normalized({0, 1, 2, 3}, {targets[2][0][0], targets[2][0][1], targets[2][1][0], targets[2][1][1]}),
        DiscreteDistribution<int>::normalized({0, 1, 2, 3}, {targets[3][0][0], targets[3][0][1], targets[3][1][0], targets[3][1][1]}),
    };
    std::vector<SwitchRecord> out;
    out.reserve(n);
    for (std::uint64_t t = 0; t < n; ++t) {
        const auto [i, j] = settings.sample(rng);
        const int cell = cell_dists[static_cast<std::size_t>((i - 1) * 2 + (j - 1))].sample(rng);
        const int a = (cell / 2 == 0) ? +1 : -1;
        const int b = (cell % 2 == 0) ? +1 : -1;
        out.push_back(SwitchRecord::make(i, j, a, b));
    }
    return out;
}

/// (A_i, B_j) evaluated on one record; a side reads 0 when its setting differs.
inline std::pair<int, int> switching_random_variable(const SwitchRecord& r, int i, int j) {
    return {r.setting_a == i ? r.value_a() : 0, r.setting_b == j ? r.value_b() : 0};
}

/// E(A_i B_j | i, j): mean of products over records taken at (i, j).
inline CorrelationEstimate switching_conditional_expectation(std::span<const SwitchRecord> records,
                                                             int i, int j) {
    std::vector<double> products;
    for (const auto& r : records) {
        if (r.setting_a == i && r.setting_b == j) {
            const auto [a, b] = switching_random_variable(r, i, j);
            products.push_back(static_cast<double>(a * b));
        }
    }
    if (products.empty()) {
        throw UndefinedEstimate("switching: no records with setting (" + std::to_string(i) + "," +
                                std::to_string(j) + ")");
    }
    return estimate_mean(products);
}

/// E(A_i B_j) over every record, zeros included.
inline CorrelationEstimate switching_unconditional_expectation(
    std::span<const SwitchRecord> records, int i, int j) {
    std::vector<double> products;
    products.reserve(records.size());
    for (const auto& r : records) {
        const auto [a, b] = switching_random_variable(r, i, j);
        products.push_back(static_cast<double>(a * b));
    }
    return estimate_mean(products);
}

/// Empirical P(a, b | i, j) for each setting pair.
inline PairwiseFamily switching_conditional_family(std::span<const SwitchRecord> records) {
    std::array<std::array<std::array<double, 2>, 2>, 4> counts{};
    std::array<double, 4> totals{};
    for (const auto& r : records) {
        const auto k = static_cast<std::size_t>((r.setting_a - 1) * 2 + (r.setting_b - 1));
        counts[k][r.value_a() == 1 ? 0 : 1][r.value_b() == 1 ? 0 : 1] += 1.0;
        totals[k] += 1.0;
    }
    for (std::size_t k = 0; k < 4; ++k) {
        if (totals[k] == 0.0) {
            throw UndefinedEstimate("switching: a setting pair has no records");
        }
        for (auto& row : counts[k]) {
            for (double& v : row) {
                v /= totals[k];
            }
        }
    }
    return counts;
}

/// Empirical measure over full records (keyed by the 10-bit layout).
inline std::map<std::uint16_t, double> switching_record_measure(std::span<const SwitchRecord> records) {
    std::map<std::uint16_t, double> m;
    for (const auto& r : records) {
        m[r.to_bits()] += 1.0;
    }
    for (auto& [k, v] : m) {
        v /= static_cast<double>(records.size());
    }
    return m;
}

} // namespace spce
