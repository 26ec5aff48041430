#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spce/error.hpp"

namespace spce {

enum class Side { alice, bob };

inline const char* to_string(Side s) { return s == Side::alice ? "alice" : "bob"; }

/// One detection attempt on one side. Outcome 0 is "no click in this trial".
struct Event {
    std::uint64_t trial = 0;
    int setting = 1;
    double time_tag = 0.0;
    int outcome = 0;

    bool operator==(const Event&) const = default;
};

struct EventStreams {
    std::vector<Event> alice;
    std::vector<Event> bob;
};

/// A measurement context: setting labels (1 or 2 in a CHSH run) and, for
/// angle-driven models, the polarizer angles behind them.
struct SettingPair {
    int alice = 1;
    int bob = 1;
    double alice_angle = 0.0;
    double bob_angle = 0.0;
};

inline void check_outcome(int outcome) {
    if (outcome < -1 || outcome > 1) {
        throw InvalidSpec("outcome " + std::to_string(outcome) + " is not in {-1, 0, +1}");
    }
}

/// Mean with standard error; the shared currency of every estimator.
struct CorrelationEstimate {
    double value = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

/// Mean and standard error (sample sd / sqrt n) of a list of values.
inline CorrelationEstimate estimate_mean(std::span<const double> values) {
    if (values.empty()) {
        throw UndefinedEstimate("cannot estimate a mean from zero samples");
    }
    const auto n = values.size();
    double mean = 0.0;
    for (double v : values) {
        mean += v;
    }
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : values) {
        ss += (v - mean) * (v - mean);
    }
    const double var = n > 1 ? ss / static_cast<double>(n - 1) : 0.0;
    return {mean, std::sqrt(var / static_cast<double>(n)), n};
}

} // namespace spce
