#pragma once

// Classical random experiments whose probabilistic models are fully determined
// by their protocol: Bertrand's chord constructions, urn draws, and a box of
// balls carrying two compatible attributes.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "spce/error.hpp"
#include "spce/rng.hpp"

namespace spce {

// ---------------------------------------------------------------------------
// Urn draws

struct UrnSpec {
    int red = 0;
    int black = 0;
    int draws = 0;
    bool with_replacement = true;

    void validate() const {
        if (red < 0 || black < 0 || red + black < 1) {
            throw InvalidSpec("urn: need red >= 0, black >= 0 and at least one ball");
        }
        if (draws < 0) {
            throw InvalidSpec("urn: draws must be non-negative");
        }
        if (!with_replacement && draws > red + black) {
            throw InvalidSpec("urn: cannot draw " + std::to_string(draws) + " balls from " +
                              std::to_string(red + black) + " without replacement");
        }
    }
};

namespace detail {

inline double log_choose(int n, int k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

inline double choose(int n, int k) {
    if (k < 0 || k > n) {
        return 0.0;
    }
    if (n > 60) {
        return std::exp(log_choose(n, k));
    }
    k = std::min(k, n - k);
    double c = 1.0;
    for (int i = 1; i <= k; ++i) {
        c = c * (n - k + i) / i;
    }
    return std::round(c);
}

} // namespace detail

/// Exact law of X = number of red balls drawn: binomial with replacement,
/// hypergeometric without. Support is always {0, ..., draws}.
inline DiscreteDistribution<int> urn_distribution(const UrnSpec& spec) {
    spec.validate();
    const int n = spec.draws;
    const int total = spec.red + spec.black;
    std::vector<int> support(static_cast<std::size_t>(n) + 1);
    std::vector<double> pmf(support.size(), 0.0);
    for (int x = 0; x <= n; ++x) {
        support[static_cast<std::size_t>(x)] = x;
        double p = 0.0;
        if (spec.with_replacement) {
            const double q = static_cast<double>(spec.red) / total;
            p = detail::choose(n, x) * std::pow(q, x) * std::pow(1.0 - q, n - x);
        } else if (x <= spec.red && n - x <= spec.black) {
            p = detail::choose(spec.red, x) * detail::choose(spec.black, n - x) /
                detail::choose(total, n);
        }
        pmf[static_cast<std::size_t>(x)] = p;
    }
    return DiscreteDistribution<int>::normalized(std::move(support), std::move(pmf));
}

struct FrequencyTable {
    std::vector<std::uint64_t> counts;
    std::uint64_t trials = 0;

    double frequency(std::size_t outcome) const {
        return outcome < counts.size() && trials > 0
                   ? static_cast<double>(counts[outcome]) / static_cast<double>(trials)
                   : 0.0;
    }
};

/// Executes the draw protocol literally, one ball at a time.
inline FrequencyTable urn_simulate(const UrnSpec& spec, std::uint64_t trials, RngStream& rng) {
    spec.validate();
    if (trials < 1) {
        throw InvalidSpec("urn_simulate: trials must be >= 1");
    }
    FrequencyTable table{std::vector<std::uint64_t>(static_cast<std::size_t>(spec.draws) + 1, 0),
                         trials};
    const auto total = static_cast<std::uint64_t>(spec.red + spec.black);
    for (std::uint64_t t = 0; t < trials; ++t) {
        std::uint64_t red_left = static_cast<std::uint64_t>(spec.red);
        std::uint64_t balls_left = total;
        int reds = 0;
        for (int d = 0; d < spec.draws; ++d) {
            // Balls are numbered; those below red_left are red.
            const bool is_red = rng.below(balls_left) < red_left;
            reds += is_red ? 1 : 0;
            if (!spec.with_replacement) {
                --balls_left;
                red_left -= is_red ? 1 : 0;
            }
        }
        ++table.counts[static_cast<std::size_t>(reds)];
    }
    return table;
}

// ---------------------------------------------------------------------------
// Bertrand's chords: outer circle of radius R = 2, inner circle of radius r = 1.

enum class BertrandMethod { random_endpoints, random_radial_point, random_midpoint };

inline std::string_view to_string(BertrandMethod m) {
    switch (m) {
    case BertrandMethod::random_endpoints: return "random_endpoints";
    case BertrandMethod::random_radial_point: return "random_radial_point";
    case BertrandMethod::random_midpoint: return "random_midpoint";
    }
    return "unknown";
}

inline BertrandMethod parse_bertrand_method(std::string_view name) {
    for (auto m : {BertrandMethod::random_endpoints, BertrandMethod::random_radial_point,
                   BertrandMethod::random_midpoint}) {
        if (to_string(m) == name) {
            return m;
        }
    }
    throw InvalidSpec("unknown Bertrand method '" + std::string(name) + "'");
}

struct ProportionEstimate {
    double value = 0.0;
    double se = 0.0;
    std::uint64_t n = 0;
};

/// Probability that a random chord of the outer circle cuts the inner one,
/// where "random chord" is defined by the chosen construction.
inline ProportionEstimate bertrand_estimate(BertrandMethod method, std::uint64_t trials,
                                            RngStream& rng) {
    if (trials < 1) {
        throw InvalidSpec("bertrand_estimate: trials must be >= 1");
    }
    constexpr double outer = 2.0;
    constexpr double inner = 1.0;
    std::uint64_t hits = 0;
    for (std::uint64_t t = 0; t < trials; ++t) {
        double center_distance = 0.0;
        switch (method) {
        case BertrandMethod::random_endpoints: {
            const double phi1 = 2.0 * std::numbers::pi * rng.uniform();
            const double phi2 = 2.0 * std::numbers::pi * rng.uniform();
            center_distance = outer * std::abs(std::cos(0.5 * (phi1 - phi2)));
            break;
        }
        case BertrandMethod::random_radial_point: {
            // Direction of the radius is irrelevant to the distance but is drawn
            // to keep the protocol literal.
            (void)rng.uniform();
            center_distance = outer * rng.uniform();
            break;
        }
        case BertrandMethod::random_midpoint: {
            double x = 0.0;
            double y = 0.0;
            do {
                x = rng.uniform(-outer, outer);
                y = rng.uniform(-outer, outer);
            } while (x * x + y * y >= outer * outer);
            center_distance = std::hypot(x, y);
            break;
        }
        }
        hits += center_distance < inner ? 1 : 0;
    }
    const double p = static_cast<double>(hits) / static_cast<double>(trials);
    return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(trials)), trials};
}

// ---------------------------------------------------------------------------
// Boxes of balls with two attributes. Color 1 = red, size 1 = big.

struct Attributes {
    int color = 0;
    int size = 0;
    auto operator<=>(const Attributes&) const = default;
};

struct AttributeBox {
    struct Entry {
        Attributes attributes;
        std::uint64_t multiplicity = 0;
    };
    std::vector<Entry> items;

    void validate() const {
        std::uint64_t total = 0;
        for (const auto& e : items) {
            if (e.multiplicity == 0) {
                throw InvalidSpec("attribute box: multiplicities must be positive");
            }
            if ((e.attributes.color != 0 && e.attributes.color != 1) ||
                (e.attributes.size != 0 && e.attributes.size != 1)) {
                throw InvalidSpec("attribute box: attributes are bits");
            }
            total += e.multiplicity;
        }
        if (total == 0) {
            throw InvalidSpec("attribute box: empty box");
        }
    }

    std::uint64_t total() const {
        std::uint64_t n = 0;
        for (const auto& e : items) {
            n += e.multiplicity;
        }
        return n;
    }

    /// 2 red (big, small) and 2 black (big, small).
    static AttributeBox four_ball() {
        return {{{{1, 1}, 1}, {{1, 0}, 1}, {{0, 1}, 1}, {{0, 0}, 1}}};
    }
};

struct AttributeJoint {
    std::array<std::array<double, 2>, 2> joint{};  ///< joint[color][size]
    std::array<double, 2> color_marginal{};
    std::array<double, 2> size_marginal{};
};

inline AttributeJoint attribute_joint_distribution(const AttributeBox& box) {
    box.validate();
    const auto total = static_cast<double>(box.total());
    AttributeJoint out;
    for (const auto& e : box.items) {
        out.joint[static_cast<std::size_t>(e.attributes.color)]
                 [static_cast<std::size_t>(e.attributes.size)] +=
            static_cast<double>(e.multiplicity) / total;
    }
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            out.color_marginal[i] += out.joint[i][j];
            out.size_marginal[j] += out.joint[i][j];
        }
    }
    return out;
}

} // namespace spce
