#pragma once

// Local realistic hidden-variable models in their joint-table form: every
// emitted pair carries a full outcome vector (a1, a2, b1, b2) and a setting
// merely reveals two of its components.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "spce/error.hpp"
#include "spce/events.hpp"
#include "spce/rng.hpp"

namespace spce {

/// binary: components in {-1, +1} (16 outcome vectors);
/// ternary: components in {-1, 0, +1} (81 outcome vectors), 0 = no click.
enum class OutcomeAlphabet { binary, ternary };

struct OutcomeVector {
    int a1 = 1;
    int a2 = 1;
    int b1 = 1;
    int b2 = 1;

    int alice(int setting) const { return setting == 1 ? a1 : a2; }
    int bob(int setting) const { return setting == 1 ? b1 : b2; }
    auto operator<=>(const OutcomeVector&) const = default;
};

class JointOutcomeTable {
public:
    JointOutcomeTable(OutcomeAlphabet alphabet, std::vector<double> probabilities)
        : alphabet_(alphabet), p_(std::move(probabilities)) {
        if (p_.size() != size(alphabet_)) {
            throw InvalidSpec("joint outcome table: expected " + std::to_string(size(alphabet_)) +
                              " entries, got " + std::to_string(p_.size()));
        }
        double total = 0.0;
        for (double v : p_) {
            if (!(v >= 0.0) || !std::isfinite(v)) {
                throw InvalidSpec("joint outcome table: probabilities must be non-negative");
            }
            total += v;
        }
        if (std::abs(total - 1.0) > normalization_tolerance) {
            throw InvalidSpec("joint outcome table: probabilities do not sum to 1");
        }
    }

    static constexpr std::size_t size(OutcomeAlphabet a) {
        return a == OutcomeAlphabet::binary ? 16 : 81;
    }

    static JointOutcomeTable uniform(OutcomeAlphabet a) {
        return {a, std::vector<double>(size(a), 1.0 / static_cast<double>(size(a)))};
    }

    static JointOutcomeTable point_mass(OutcomeAlphabet a, OutcomeVector w) {
        std::vector<double> p(size(a), 0.0);
        p[index_of(a, w)] = 1.0;
        return {a, std::move(p)};
    }

    /// Weights drawn i.i.d. exponential then normalised (uniform on the simplex).
    static JointOutcomeTable random(OutcomeAlphabet a, RngStream& rng) {
        std::vector<double> p(size(a));
        double total = 0.0;
        for (auto& v : p) {
            double u = rng.uniform();
            while (u <= 0.0) {
                u = rng.uniform();
            }
            v = -std::log(u);
            total += v;
        }
        for (auto& v : p) {
            v /= total;
        }
        // Fold residual roundoff into the largest cell.
        double sum = 0.0;
        for (double v : p) {
            sum += v;
        }
        *std::max_element(p.begin(), p.end()) += 1.0 - sum;
        return {a, std::move(p)};
    }

    static std::size_t index_of(OutcomeAlphabet a, const OutcomeVector& w) {
        const std::array<int, 4> c{w.a1, w.a2, w.b1, w.b2};
        std::size_t idx = 0;
        for (int v : c) {
            if (a == OutcomeAlphabet::binary) {
                if (v != 1 && v != -1) {
                    throw InvalidSpec("binary outcome vectors have components +-1");
                }
                idx = idx * 2 + (v == 1 ? 0 : 1);
            } else {
                check_outcome(v);
                idx = idx * 3 + static_cast<std::size_t>(v + 1);
            }
        }
        return idx;
    }

    static OutcomeVector vector_at(OutcomeAlphabet a, std::size_t idx) {
        std::array<int, 4> c{};
        for (int k = 3; k >= 0; --k) {
            if (a == OutcomeAlphabet::binary) {
                c[static_cast<std::size_t>(k)] = (idx % 2 == 0) ? 1 : -1;
                idx /= 2;
            } else {
                c[static_cast<std::size_t>(k)] = static_cast<int>(idx % 3) - 1;
                idx /= 3;
            }
        }
        return {c[0], c[1], c[2], c[3]};
    }

    OutcomeAlphabet alphabet() const noexcept { return alphabet_; }
    std::size_t cells() const noexcept { return p_.size(); }
    double probability(std::size_t idx) const { return p_.at(idx); }
    double probability(const OutcomeVector& w) const { return p_[index_of(alphabet_, w)]; }
    OutcomeVector vector(std::size_t idx) const { return vector_at(alphabet_, idx); }
    const std::vector<double>& probabilities() const noexcept { return p_; }

    /// Marginal P(a_i = a, b_j = b), indexed [a + 1][b + 1].
    std::array<std::array<double, 3>, 3> marginal(int i, int j) const {
        std::array<std::array<double, 3>, 3> m{};
        for (std::size_t k = 0; k < p_.size(); ++k) {
            const auto w = vector(k);
            m[static_cast<std::size_t>(w.alice(i) + 1)][static_cast<std::size_t>(w.bob(j) + 1)] +=
                p_[k];
        }
        return m;
    }

private:
    OutcomeAlphabet alphabet_;
    std::vector<double> p_;
};

inline void check_setting_index(int s) {
    if (s != 1 && s != 2) {
        throw InvalidSpec("setting index must be 1 or 2, got " + std::to_string(s));
    }
}

/// E(A_i B_j) = sum over the table of a_i b_j P(a1, a2, b1, b2).
inline double lrhvm_expectation(const JointOutcomeTable& table, int i, int j) {
    check_setting_index(i);
    check_setting_index(j);
    double e = 0.0;
    for (std::size_t k = 0; k < table.cells(); ++k) {
        const auto w = table.vector(k);
        e += static_cast<double>(w.alice(i) * w.bob(j)) * table.probability(k);
    }
    return e;
}

/// Per trial: draw a full outcome vector, reveal only (a_i, b_j).
inline EventStreams lrhvm_simulate(const JointOutcomeTable& table, int i, int j, std::uint64_t n,
                                   RngStream& rng) {
    check_setting_index(i);
    check_setting_index(j);
    if (n < 1) {
        throw InvalidSpec("lrhvm_simulate: n must be >= 1");
    }
    std::vector<std::size_t> cells(table.cells());
    for (std::size_t k = 0; k < cells.size(); ++k) {
        cells[k] = k;
    }
    const auto dist = DiscreteDistribution<std::size_t>::normalized(cells, table.probabilities());
    EventStreams out;
    out.alice.reserve(n);
    out.bob.reserve(n);
    for (std::uint64_t t = 0; t < n; ++t) {
        const auto w = table.vector(dist.sample(rng));
        const auto tag = static_cast<double>(t);
        out.alice.push_back({t, i, tag, w.alice(i)});
        out.bob.push_back({t, j, tag, w.bob(j)});
    }
    return out;
}

/// |E11 - E12| + |E21 + E22| from exact table sums.
inline double chsh_exact_lrhvm(const JointOutcomeTable& table) {
    return std::abs(lrhvm_expectation(table, 1, 1) - lrhvm_expectation(table, 1, 2)) +
           std::abs(lrhvm_expectation(table, 2, 1) + lrhvm_expectation(table, 2, 2));
}

} // namespace spce
