#pragma once

// Counter-based, label-addressed random streams.
//
// A stream is identified by (root_seed, label). Its key is a hash of both, and
// the i-th output is a SplitMix64 finalisation of key + i * golden_gamma, so a
// stream can be reconstructed anywhere without coordination. Sampling helpers
// here never go through <random> distributions, whose output is
// implementation-defined and would break cross-platform reproducibility.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spce/error.hpp"

namespace spce {

namespace detail {

inline constexpr std::uint64_t golden_gamma = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view text) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace detail

class RngStream {
public:
    using result_type = std::uint64_t;

    RngStream(std::uint64_t root_seed, std::string label)
        : root_seed_(root_seed), label_(std::move(label)) {
        if (label_.empty()) {
            throw InvalidSpec("stream label must be non-empty");
        }
        key_ = detail::mix64(detail::mix64(root_seed_ ^ detail::golden_gamma) ^
                             detail::fnv1a(label_));
    }

    std::uint64_t root_seed() const noexcept { return root_seed_; }
    const std::string& label() const noexcept { return label_; }
    std::uint64_t counter() const noexcept { return counter_; }

    /// Stream for "<label>/<sub>" under the same root seed.
    RngStream child(std::string_view sub) const {
        return RngStream(root_seed_, label_ + "/" + std::string(sub));
    }

    std::uint64_t next_u64() noexcept {
        ++counter_;
        return detail::mix64(key_ + counter_ * detail::golden_gamma);
    }

    // UniformRandomBitGenerator surface, for std::shuffle and friends.
    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }
    result_type operator()() noexcept { return next_u64(); }

    /// Uniform on [0, 1) with 53 bits of resolution.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, bound).
    std::uint64_t below(std::uint64_t bound) {
        if (bound == 0) {
            throw InvalidSpec("below(): bound must be positive");
        }
        // Lemire's multiply-shift with rejection.
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * bound;
        auto low = static_cast<std::uint64_t>(m);
        if (low < bound) {
            const std::uint64_t threshold = (0 - bound) % bound;
            while (low < threshold) {
                m = static_cast<unsigned __int128>(next_u64()) * bound;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    /// +1 with probability p, -1 otherwise.
    int sign(double p_plus = 0.5) noexcept { return bernoulli(p_plus) ? +1 : -1; }

    /// Standard normal via Box-Muller (one variate per call, no cached pair).
    double normal() noexcept {
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t root_seed_;
    std::string label_;
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

inline RngStream derive_stream(std::uint64_t root_seed, std::string_view stream_label) {
    return RngStream(root_seed, std::string(stream_label));
}

/// Label for one block of a parallel generator: "<model>/<role>/block-<index>".
inline std::string block_label(std::string_view model, std::string_view role, std::size_t index) {
    std::string out;
    out.reserve(model.size() + role.size() + 16);
    out.append(model).append("/").append(role).append("/block-").append(std::to_string(index));
    return out;
}

/// Uniform angle on [0, pi), used for hidden polarization directions.
inline double sample_uniform_angle(RngStream& rng) noexcept {
    double theta = std::numbers::pi * rng.uniform();
    if (theta >= std::numbers::pi) {
        theta = std::nextafter(std::numbers::pi, 0.0);
    }
    return theta;
}

inline constexpr double normalization_tolerance = 1e-12;

/// Finite distribution over distinct outcome identifiers.
template <class T>
class DiscreteDistribution {
public:
    DiscreteDistribution(std::vector<T> support, std::vector<double> weights)
        : support_(std::move(support)), weights_(std::move(weights)) {
        if (support_.empty()) {
            throw InvalidSpec("discrete distribution: empty support");
        }
        if (support_.size() != weights_.size()) {
            throw InvalidSpec("discrete distribution: support and weights differ in length");
        }
        double total = 0.0;
        for (double w : weights_) {
            if (!(w >= 0.0) || !std::isfinite(w)) {
                throw InvalidSpec("discrete distribution: weights must be finite and non-negative");
            }
            total += w;
        }
        if (std::abs(total - 1.0) > normalization_tolerance) {
            throw InvalidSpec("discrete distribution: weights sum to " + std::to_string(total) +
                              ", not 1");
        }
        check_distinct();
        cdf_.resize(weights_.size());
        std::partial_sum(weights_.begin(), weights_.end(), cdf_.begin());
    }

    /// Builds a distribution from non-negative weights of any positive total.
    static DiscreteDistribution normalized(std::vector<T> support, std::vector<double> weights) {
        const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
        if (!(total > 0.0)) {
            throw InvalidSpec("discrete distribution: weights have no positive mass");
        }
        for (double& w : weights) {
            w /= total;
        }
        return DiscreteDistribution(std::move(support), std::move(weights));
    }

    static DiscreteDistribution point_mass(T value) {
        return DiscreteDistribution({std::move(value)}, {1.0});
    }

    static DiscreteDistribution uniform(std::vector<T> support) {
        std::vector<double> w(support.size(), 1.0 / static_cast<double>(support.size()));
        return normalized(std::move(support), std::move(w));
    }

    std::span<const T> support() const noexcept { return support_; }
    std::span<const double> weights() const noexcept { return weights_; }
    std::size_t size() const noexcept { return support_.size(); }

    const T& sample(RngStream& rng) const {
        const double u = rng.uniform() * cdf_.back();
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        auto idx = static_cast<std::size_t>(it - cdf_.begin());
        // Guard the upper edge and skip zero-weight entries at ties.
        idx = std::min(idx, support_.size() - 1);
        while (weights_[idx] == 0.0 && idx > 0) {
            --idx;
        }
        return support_[idx];
    }

    /// Weighted mean of f over the support.
    template <class F>
    double expect(F&& f) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < support_.size(); ++i) {
            acc += weights_[i] * static_cast<double>(f(support_[i]));
        }
        return acc;
    }

private:
    void check_distinct() const {
        if constexpr (std::totally_ordered<T>) {
            std::vector<const T*> ptrs;
            ptrs.reserve(support_.size());
            for (const auto& s : support_) {
                ptrs.push_back(&s);
            }
            std::sort(ptrs.begin(), ptrs.end(), [](const T* a, const T* b) { return *a < *b; });
            for (std::size_t i = 1; i < ptrs.size(); ++i) {
                if (!(*ptrs[i - 1] < *ptrs[i])) {
                    throw InvalidSpec("discrete distribution: duplicate support identifier");
                }
            }
        } else {
            for (std::size_t i = 0; i < support_.size(); ++i) {
                for (std::size_t j = i + 1; j < support_.size(); ++j) {
                    if (support_[i] == support_[j]) {
                        throw InvalidSpec("discrete distribution: duplicate support identifier");
                    }
                }
            }
        }
    }

    std::vector<T> support_;
    std::vector<double> weights_;
    std::vector<double> cdf_;
};

template <class T>
const T& sample_discrete(const DiscreteDistribution<T>& dist, RngStream& rng) {
    return dist.sample(rng);
}

} // namespace spce
