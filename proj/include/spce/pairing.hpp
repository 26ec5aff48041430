#pragma once

// Turning two one-sided outcome streams into a joint sample. The joint
// distribution you estimate is a property of the pairing rule as much as of
// the sources: shifting, random pairing and coincidence windows applied to the
// same two streams give different answers.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "spce/error.hpp"
#include "spce/events.hpp"
#include "spce/rng.hpp"

namespace spce {

struct TimeSeries {
    std::vector<int> values;
    std::vector<double> time_tags;  ///< empty, or one strictly increasing tag per value

    bool has_tags() const noexcept { return !time_tags.empty(); }
    std::size_t size() const noexcept { return values.size(); }

    void validate() const {
        if (has_tags()) {
            if (time_tags.size() != values.size()) {
                throw InvalidSpec("time series: tag count differs from value count");
            }
            for (std::size_t i = 1; i < time_tags.size(); ++i) {
                if (!(time_tags[i] > time_tags[i - 1])) {
                    throw InvalidSpec("time series: tags must be strictly increasing");
                }
            }
        }
    }

    double tag(std::size_t i) const {
        return has_tags() ? time_tags[i] : std::numeric_limits<double>::quiet_NaN();
    }
};

inline TimeSeries series_from_events(std::span<const Event> events) {
    TimeSeries s;
    s.values.reserve(events.size());
    s.time_tags.reserve(events.size());
    for (const auto& e : events) {
        s.values.push_back(e.outcome);
        s.time_tags.push_back(e.time_tag);
    }
    return s;
}

struct MatchedPair {
    std::size_t index_a = 0;
    std::size_t index_b = 0;
    double t_a = 0.0;
    double t_b = 0.0;
    int a = 0;
    int b = 0;
};

struct PairedSample {
    std::vector<MatchedPair> pairs;
    std::string provenance;
    std::size_t unmatched_a = 0;
    std::size_t unmatched_b = 0;
};

enum class WindowRule { fixed_bins, nearest_neighbor, first_match_greedy };

inline const char* to_string(WindowRule r) {
    switch (r) {
    case WindowRule::fixed_bins: return "fixed_bins";
    case WindowRule::nearest_neighbor: return "nearest_neighbor";
    case WindowRule::first_match_greedy: return "first_match_greedy";
    }
    return "unknown";
}

inline WindowRule parse_window_rule(std::string_view name) {
    for (auto r : {WindowRule::fixed_bins, WindowRule::nearest_neighbor,
                   WindowRule::first_match_greedy}) {
        if (name == to_string(r)) {
            return r;
        }
    }
    throw InvalidSpec("unknown window rule '" + std::string(name) + "'");
}

struct WindowPolicy {
    double width = 1.0;
    WindowRule rule = WindowRule::first_match_greedy;

    void validate() const {
        if (!(width > 0.0) || !std::isfinite(width)) {
            throw InvalidSpec("window width must be positive");
        }
    }
};

/// Pairs (a_i, b_{k+i-1}) with 1-based i. b_1 .. b_{k-1} are discarded and
/// counted as unmatched, as is any tail of either series.
inline PairedSample pair_shift(const TimeSeries& s1, const TimeSeries& s2, std::size_t k) {
    if (s1.values.empty() || s2.values.empty()) {
        throw InvalidSpec("pair_shift: both series must be non-empty");
    }
    if (k < 1) {
        throw InvalidSpec("pair_shift: offset k must be >= 1");
    }
    PairedSample out;
    out.provenance = "shift k=" + std::to_string(k);
    const std::size_t offset = k - 1;
    const std::size_t n = offset >= s2.size() ? 0 : std::min(s1.size(), s2.size() - offset);
    out.pairs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i + offset;
        out.pairs.push_back({i, j, s1.tag(i), s2.tag(j), s1.values[i], s2.values[j]});
    }
    out.unmatched_a = s1.size() - n;
    out.unmatched_b = s2.size() - n;
    return out;
}

/// n_pairs independent uniform index pairs, drawn with replacement.
inline PairedSample pair_random(const TimeSeries& s1, const TimeSeries& s2, std::size_t n_pairs,
                                RngStream& rng) {
    if (s1.values.empty() || s2.values.empty()) {
        throw InvalidSpec("pair_random: both series must be non-empty");
    }
    PairedSample out;
    out.provenance = "random n=" + std::to_string(n_pairs);
    out.pairs.reserve(n_pairs);
    std::vector<bool> used_a(s1.size(), false);
    std::vector<bool> used_b(s2.size(), false);
    for (std::size_t p = 0; p < n_pairs; ++p) {
        const auto i = static_cast<std::size_t>(rng.below(s1.size()));
        const auto j = static_cast<std::size_t>(rng.below(s2.size()));
        used_a[i] = true;
        used_b[j] = true;
        out.pairs.push_back({i, j, s1.tag(i), s2.tag(j), s1.values[i], s2.values[j]});
    }
    out.unmatched_a = static_cast<std::size_t>(std::count(used_a.begin(), used_a.end(), false));
    out.unmatched_b = static_cast<std::size_t>(std::count(used_b.begin(), used_b.end(), false));
    return out;
}

namespace detail {

struct Click {
    std::size_t index;
    double t;
    int outcome;
};

inline std::vector<Click> clicks_of(std::span<const Event> events, const char* side) {
    std::vector<Click> out;
    out.reserve(events.size());
    for (std::size_t i = 0; i < events.size(); ++i) {
        if (i > 0 && events[i].time_tag < events[i - 1].time_tag) {
            throw InvalidSpec(std::string("pair_window: ") + side +
                              " time tags are not sorted at index " + std::to_string(i));
        }
        check_outcome(events[i].outcome);
        if (events[i].outcome != 0) {
            out.push_back({i, events[i].time_tag, events[i].outcome});
        }
    }
    return out;
}

} // namespace detail

/// Coincidence matching of two click streams. Non-detections are dropped
/// first; each click is used at most once; every pair satisfies
/// |t_a - t_b| <= width.
inline PairedSample pair_window(std::span<const Event> a_events, std::span<const Event> b_events,
                                const WindowPolicy& policy) {
    policy.validate();
    const auto ca = detail::clicks_of(a_events, "alice");
    const auto cb = detail::clicks_of(b_events, "bob");
    const double w = policy.width;

    PairedSample out;
    out.provenance = std::string("window ") + to_string(policy.rule) + " W=" + std::to_string(w);
    auto emit = [&](const detail::Click& x, const detail::Click& y) {
        out.pairs.push_back({x.index, y.index, x.t, y.t, x.outcome, y.outcome});
    };

    switch (policy.rule) {
    case WindowRule::fixed_bins: {
        // Buckets floor(t / W); the m-th click of a bucket pairs with the m-th
        // click of the same bucket on the other side.
        std::size_t i = 0;
        std::size_t j = 0;
        while (i < ca.size() && j < cb.size()) {
            const double bin_a = std::floor(ca[i].t / w);
            const double bin_b = std::floor(cb[j].t / w);
            if (bin_a < bin_b) {
                ++i;
            } else if (bin_b < bin_a) {
                ++j;
            } else {
                emit(ca[i], cb[j]);
                ++i;
                ++j;
            }
        }
        break;
    }
    case WindowRule::first_match_greedy: {
        std::vector<bool> taken(cb.size(), false);
        std::size_t lo = 0;
        for (const auto& x : ca) {
            while (lo < cb.size() && (taken[lo] || cb[lo].t < x.t - w)) {
                ++lo;
            }
            for (std::size_t j = lo; j < cb.size() && cb[j].t <= x.t + w; ++j) {
                if (!taken[j]) {
                    taken[j] = true;
                    emit(x, cb[j]);
                    break;
                }
            }
        }
        break;
    }
    case WindowRule::nearest_neighbor: {
        // All candidate pairs within W, accepted greedily by increasing gap;
        // ties go to the earlier a-click, then the earlier b-click.
        std::vector<std::tuple<double, std::size_t, std::size_t>> candidates;
        std::size_t lo = 0;
        for (std::size_t i = 0; i < ca.size(); ++i) {
            while (lo < cb.size() && cb[lo].t < ca[i].t - w) {
                ++lo;
            }
            for (std::size_t j = lo; j < cb.size() && cb[j].t <= ca[i].t + w; ++j) {
                candidates.emplace_back(std::abs(ca[i].t - cb[j].t), i, j);
            }
        }
        std::sort(candidates.begin(), candidates.end());
        std::vector<bool> used_a(ca.size(), false);
        std::vector<bool> used_b(cb.size(), false);
        std::vector<std::pair<std::size_t, std::size_t>> accepted;
        for (const auto& [gap, i, j] : candidates) {
            if (!used_a[i] && !used_b[j]) {
                used_a[i] = true;
                used_b[j] = true;
                accepted.emplace_back(i, j);
            }
        }
        std::sort(accepted.begin(), accepted.end());
        for (const auto& [i, j] : accepted) {
            emit(ca[i], cb[j]);
        }
        break;
    }
    }
    out.unmatched_a = ca.size() - out.pairs.size();
    out.unmatched_b = cb.size() - out.pairs.size();
    return out;
}

/// Pairs events that share an emission index: the ground-truth pairing a
/// simulation knows and a laboratory does not. Zero outcomes are kept.
inline PairedSample pair_by_trial(std::span<const Event> a_events,
                                  std::span<const Event> b_events) {
    PairedSample out;
    out.provenance = "emission index";
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < a_events.size() && j < b_events.size()) {
        if (a_events[i].trial < b_events[j].trial) {
            ++i;
        } else if (b_events[j].trial < a_events[i].trial) {
            ++j;
        } else {
            out.pairs.push_back({i, j, a_events[i].time_tag, b_events[j].time_tag,
                                 a_events[i].outcome, b_events[j].outcome});
            ++i;
            ++j;
        }
    }
    out.unmatched_a = a_events.size() - out.pairs.size();
    out.unmatched_b = b_events.size() - out.pairs.size();
    return out;
}

/// Charlie's streams: a fair +-1 sequence and its element-wise negation,
/// tagged with the position index.
inline std::pair<TimeSeries, TimeSeries> charlie_generate(std::size_t n, RngStream& rng) {
    if (n < 1) {
        throw InvalidSpec("charlie_generate: n must be >= 1");
    }
    TimeSeries s1;
    TimeSeries s2;
    s1.values.reserve(n);
    s2.values.reserve(n);
    s1.time_tags.reserve(n);
    s2.time_tags.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int bit = static_cast<int>(rng.next_u64() >> 63);
        const int flipped = 1 - bit;
        s1.values.push_back(bit == 1 ? 1 : -1);
        s2.values.push_back(flipped == 1 ? 1 : -1);
        s1.time_tags.push_back(static_cast<double>(i));
        s2.time_tags.push_back(static_cast<double>(i));
    }
    return {std::move(s1), std::move(s2)};
}

/// Empirical joint frequencies over {-1, 0, +1}^2, indexed [a + 1][b + 1].
struct JointFrequency {
    std::array<std::array<double, 3>, 3> p{};
    std::array<double, 3> marginal_a{};
    std::array<double, 3> marginal_b{};
    std::size_t n = 0;

    double at(int a, int b) const {
        return p[static_cast<std::size_t>(a + 1)][static_cast<std::size_t>(b + 1)];
    }
};

inline JointFrequency empirical_gjpd(const PairedSample& sample) {
    if (sample.pairs.empty()) {
        throw UndefinedEstimate("empirical_gjpd: empty sample");
    }
    std::array<std::array<std::size_t, 3>, 3> counts{};
    for (const auto& pr : sample.pairs) {
        check_outcome(pr.a);
        check_outcome(pr.b);
        ++counts[static_cast<std::size_t>(pr.a + 1)][static_cast<std::size_t>(pr.b + 1)];
    }
    JointFrequency f;
    f.n = sample.pairs.size();
    const auto n = static_cast<double>(f.n);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            f.p[i][j] = static_cast<double>(counts[i][j]) / n;
            f.marginal_a[i] += static_cast<double>(counts[i][j]);
            f.marginal_b[j] += static_cast<double>(counts[i][j]);
        }
    }
    for (std::size_t i = 0; i < 3; ++i) {
        f.marginal_a[i] /= n;
        f.marginal_b[i] /= n;
    }
    return f;
}

} // namespace spce
