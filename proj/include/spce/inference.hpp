#pragma once

// Estimators and tests applied to paired samples and single-sided series:
// correlation estimates, the CHSH combination, no-signalling checks, a
// finite-sample CHSH threshold, and homogeneity / fine-structure tests for
// time series.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "spce/error.hpp"
#include "spce/events.hpp"
#include "spce/pairing.hpp"
#include "spce/stats.hpp"

namespace spce {

inline constexpr double default_alpha = 0.01;

/// Whether pairs containing a non-detection count (with product 0) or are
/// dropped. This single switch is the detection/coincidence loophole.
enum class ZeroPolicy { include, coincident_only };

inline const char* to_string(ZeroPolicy p) {
    return p == ZeroPolicy::include ? "include" : "coincident_only";
}

inline ZeroPolicy parse_zero_policy(std::string_view s) {
    if (s == "include") {
        return ZeroPolicy::include;
    }
    if (s == "coincident_only") {
        return ZeroPolicy::coincident_only;
    }
    throw InvalidSpec("unknown zero policy '" + std::string(s) + "'");
}

inline CorrelationEstimate correlation_estimate(const PairedSample& sample,
                                                ZeroPolicy policy = ZeroPolicy::coincident_only) {
    std::vector<double> products;
    products.reserve(sample.pairs.size());
    for (const auto& p : sample.pairs) {
        check_outcome(p.a);
        check_outcome(p.b);
        if (policy == ZeroPolicy::coincident_only && (p.a == 0 || p.b == 0)) {
            continue;
        }
        products.push_back(static_cast<double>(p.a * p.b));
    }
    if (products.empty()) {
        throw UndefinedEstimate("correlation_estimate: no usable pairs");
    }
    return estimate_mean(products);
}

// ---------------------------------------------------------------------------
// CHSH

/// Which setting index plays A, A', B, B' in |E(AB) - E(AB')| + |E(A'B) + E(A'B')|.
struct ChshRoles {
    int a = 1;
    int a_prime = 2;
    int b = 1;
    int b_prime = 2;

    static std::array<ChshRoles, 4> all() {
        return {ChshRoles{1, 2, 1, 2}, ChshRoles{1, 2, 2, 1}, ChshRoles{2, 1, 1, 2},
                ChshRoles{2, 1, 2, 1}};
    }
};

struct ChshReport {
    std::map<std::pair<int, int>, CorrelationEstimate> estimates;
    ChshRoles roles;
    double s_value = 0.0;
    double s_se = 0.0;

    const CorrelationEstimate& at(int i, int j) const { return estimates.at({i, j}); }

    /// S recomputed from the stored estimates.
    double recompute() const {
        return std::abs(at(roles.a, roles.b).value - at(roles.a, roles.b_prime).value) +
               std::abs(at(roles.a_prime, roles.b).value + at(roles.a_prime, roles.b_prime).value);
    }
};

inline ChshReport chsh_statistic(const CorrelationEstimate& e11, const CorrelationEstimate& e12,
                                 const CorrelationEstimate& e21, const CorrelationEstimate& e22,
                                 ChshRoles roles = {}) {
    ChshReport r;
    r.estimates = {{{1, 1}, e11}, {{1, 2}, e12}, {{2, 1}, e21}, {{2, 2}, e22}};
    r.roles = roles;
    r.s_value = r.recompute();
    r.s_se = std::sqrt(e11.se * e11.se + e12.se * e12.se + e21.se * e21.se + e22.se * e22.se);
    return r;
}

/// The role assignment giving the largest S.
inline ChshReport chsh_max_over_roles(const CorrelationEstimate& e11, const CorrelationEstimate& e12,
                                      const CorrelationEstimate& e21,
                                      const CorrelationEstimate& e22) {
    ChshReport best = chsh_statistic(e11, e12, e21, e22);
    for (const auto& roles : ChshRoles::all()) {
        auto r = chsh_statistic(e11, e12, e21, e22, roles);
        if (r.s_value > best.s_value) {
            best = r;
        }
    }
    return best;
}

/// Hoeffding-style threshold t with P(S_hat > t) <= delta for any local
/// model, n trials per setting pair: 2 + 4 sqrt(2 ln(8 / delta) / n).
inline double finite_sample_bound(std::uint64_t n_per_setting, double delta) {
    if (n_per_setting < 1) {
        throw InvalidSpec("finite_sample_bound: n must be >= 1");
    }
    if (!(delta > 0.0 && delta < 1.0)) {
        throw InvalidSpec("finite_sample_bound: delta must lie in (0, 1)");
    }
    return 2.0 + 4.0 * std::sqrt(2.0 * std::log(8.0 / delta) / static_cast<double>(n_per_setting));
}

// ---------------------------------------------------------------------------
// Test reports

enum class Decision { reject, fail_to_reject };

inline const char* to_string(Decision d) { return d == Decision::reject ? "reject" : "fail_to_reject"; }

struct TestReport {
    std::string test_name;
    double statistic = 0.0;
    double p_value = 1.0;
    Decision decision = Decision::fail_to_reject;
    double alpha = default_alpha;
    /// No variation to test (e.g. a constant series); reported as fail_to_reject.
    bool degenerate = false;
};

inline TestReport make_report(std::string name, double statistic, double p, double alpha,
                              bool degenerate = false) {
    p = std::clamp(p, 0.0, 1.0);
    return {std::move(name), statistic, p, p < alpha ? Decision::reject : Decision::fail_to_reject,
            alpha, degenerate};
}

inline void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw InvalidSpec("alpha must lie in (0, 1)");
    }
}

// ---------------------------------------------------------------------------
// No-signalling

/// Local outcomes on one side collected under one (local, remote) setting pair.
struct MarginalGroup {
    Side side = Side::alice;
    int local_setting = 1;
    int remote_setting = 1;
    std::vector<int> outcomes;
};

/// For each (side, local setting): test that the local mean is the same under
/// every remote setting. Uses the pooled within-group variance, so with two
/// remote settings this is the two-sample z-test (statistic reported as z^2,
/// chi-square with k - 1 degrees of freedom in general).
inline std::vector<TestReport> no_signalling_test(std::span<const MarginalGroup> groups,
                                                  double alpha = default_alpha) {
    check_alpha(alpha);
    std::map<std::pair<Side, int>, std::map<int, std::vector<int>>> buckets;
    for (const auto& g : groups) {
        auto& v = buckets[{g.side, g.local_setting}][g.remote_setting];
        v.insert(v.end(), g.outcomes.begin(), g.outcomes.end());
    }
    if (buckets.empty()) {
        throw InvalidSpec("no_signalling_test: no groups supplied");
    }
    std::vector<TestReport> reports;
    for (const auto& [key, by_remote] : buckets) {
        const std::string name = std::string("no_signalling[") + to_string(key.first) +
                                 ",setting=" + std::to_string(key.second) + "]";
        if (by_remote.size() < 2) {
            throw InvalidSpec(name + ": need at least two remote settings");
        }
        std::vector<double> means;
        std::vector<double> sizes;
        double within = 0.0;
        double n_total = 0.0;
        for (const auto& [remote, outcomes] : by_remote) {
            if (outcomes.empty()) {
                throw InvalidSpec(name + ": empty group for remote setting " +
                                  std::to_string(remote));
            }
            double m = 0.0;
            for (int x : outcomes) {
                m += x;
            }
            m /= static_cast<double>(outcomes.size());
            for (int x : outcomes) {
                within += (x - m) * (x - m);
            }
            means.push_back(m);
            sizes.push_back(static_cast<double>(outcomes.size()));
            n_total += static_cast<double>(outcomes.size());
        }
        const double k = static_cast<double>(means.size());
        if (within <= 0.0 || n_total <= k) {
            const bool equal = std::all_of(means.begin(), means.end(),
                                           [&](double m) { return m == means.front(); });
            reports.push_back(make_report(name, 0.0, equal ? 1.0 : 0.0, alpha, true));
            continue;
        }
        const double pooled_var = within / (n_total - k);
        double grand = 0.0;
        for (std::size_t g = 0; g < means.size(); ++g) {
            grand += sizes[g] * means[g];
        }
        grand /= n_total;
        double stat = 0.0;
        for (std::size_t g = 0; g < means.size(); ++g) {
            stat += sizes[g] * (means[g] - grand) * (means[g] - grand);
        }
        stat /= pooled_var;
        reports.push_back(make_report(name, stat, stats::chi_square_sf(stat, k - 1.0), alpha));
    }
    return reports;
}

/// Groups both sides' events of a set of runs, one run per setting pair.
inline std::vector<MarginalGroup> marginal_groups(std::span<const EventStreams> runs) {
    std::vector<MarginalGroup> groups;
    for (const auto& run : runs) {
        if (run.alice.empty() || run.bob.empty()) {
            continue;
        }
        MarginalGroup ga{Side::alice, run.alice.front().setting, run.bob.front().setting, {}};
        MarginalGroup gb{Side::bob, run.bob.front().setting, run.alice.front().setting, {}};
        for (const auto& e : run.alice) {
            ga.outcomes.push_back(e.outcome);
        }
        for (const auto& e : run.bob) {
            gb.outcomes.push_back(e.outcome);
        }
        groups.push_back(std::move(ga));
        groups.push_back(std::move(gb));
    }
    return groups;
}

// ---------------------------------------------------------------------------
// Purity and fine structure

/// Chi-square homogeneity of outcome frequencies across consecutive blocks.
/// A mixture of differently prepared sub-ensembles shows up as rejection.
inline TestReport purity_test(const TimeSeries& series, std::size_t block_size,
                              double alpha = default_alpha) {
    check_alpha(alpha);
    if (block_size < 1 || series.size() < 2 * block_size) {
        throw InvalidSpec("purity_test: series must hold at least two blocks of size " +
                          std::to_string(block_size));
    }
    const std::size_t n_blocks = series.size() / block_size;
    std::set<int> categories(series.values.begin(),
                             series.values.begin() +
                                 static_cast<std::ptrdiff_t>(n_blocks * block_size));
    if (categories.size() < 2) {
        return make_report("purity", 0.0, 1.0, alpha, true);
    }
    std::map<int, std::size_t> column;
    for (int c : categories) {
        column.emplace(c, column.size());
    }
    const std::size_t n_cat = categories.size();
    std::vector<std::size_t> counts(n_blocks * n_cat, 0);
    std::vector<double> totals(n_cat, 0.0);
    for (std::size_t b = 0; b < n_blocks; ++b) {
        for (std::size_t i = 0; i < block_size; ++i) {
            const std::size_t c = column.at(series.values[b * block_size + i]);
            ++counts[b * n_cat + c];
            totals[c] += 1.0;
        }
    }
    const double n_total = static_cast<double>(n_blocks * block_size);
    double stat = 0.0;
    for (std::size_t b = 0; b < n_blocks; ++b) {
        for (std::size_t c = 0; c < n_cat; ++c) {
            const double expected = static_cast<double>(block_size) * totals[c] / n_total;
            const double d = static_cast<double>(counts[b * n_cat + c]) - expected;
            stat += d * d / expected;
        }
    }
    const auto dof = static_cast<double>((n_blocks - 1) * (n_cat - 1));
    return make_report("purity", stat, stats::chi_square_sf(stat, dof), alpha);
}

inline constexpr std::size_t autocorrelation_max_lag = 10;
inline constexpr std::size_t drift_blocks = 10;

/// Wald-Wolfowitz runs test on the series dichotomised at its mean.
inline TestReport runs_test(const TimeSeries& series, double alpha = default_alpha) {
    const auto& v = series.values;
    double mean = 0.0;
    for (int x : v) {
        mean += x;
    }
    mean /= static_cast<double>(v.size());
    std::size_t n1 = 0;
    std::size_t runs = 0;
    bool prev = false;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const bool high = v[i] > mean;
        n1 += high ? 1 : 0;
        if (i == 0 || high != prev) {
            ++runs;
        }
        prev = high;
    }
    const auto n = static_cast<double>(v.size());
    const auto a = static_cast<double>(n1);
    const double b = n - a;
    if (a == 0.0 || b == 0.0) {
        return make_report("runs", 0.0, 1.0, alpha, true);
    }
    const double mu = 2.0 * a * b / n + 1.0;
    const double var = 2.0 * a * b * (2.0 * a * b - n) / (n * n * (n - 1.0));
    const double z = (static_cast<double>(runs) - mu) / std::sqrt(var);
    return make_report("runs", z, stats::two_sided_normal_p(z), alpha);
}

/// Ljung-Box portmanteau test over lags 1..10.
inline TestReport autocorrelation_test(const TimeSeries& series, double alpha = default_alpha) {
    const auto& v = series.values;
    const std::size_t n = v.size();
    double mean = 0.0;
    for (int x : v) {
        mean += x;
    }
    mean /= static_cast<double>(n);
    double c0 = 0.0;
    for (int x : v) {
        c0 += (x - mean) * (x - mean);
    }
    if (c0 <= 0.0) {
        return make_report("autocorrelation", 0.0, 1.0, alpha, true);
    }
    double q = 0.0;
    for (std::size_t lag = 1; lag <= autocorrelation_max_lag; ++lag) {
        double ck = 0.0;
        for (std::size_t i = lag; i < n; ++i) {
            ck += (v[i] - mean) * (v[i - lag] - mean);
        }
        const double r = ck / c0;
        q += r * r / static_cast<double>(n - lag);
    }
    q *= static_cast<double>(n) * static_cast<double>(n + 2);
    return make_report("autocorrelation", q,
                       stats::chi_square_sf(q, static_cast<double>(autocorrelation_max_lag)), alpha);
}

/// Linear trend in block means: z-test of the least-squares slope across
/// 10 consecutive blocks, with the block-mean variance taken from the whole
/// series.
inline TestReport drift_test(const TimeSeries& series, double alpha = default_alpha) {
    const auto& v = series.values;
    const std::size_t len = v.size() / drift_blocks;
    const std::size_t used = len * drift_blocks;
    double mean = 0.0;
    for (std::size_t i = 0; i < used; ++i) {
        mean += v[i];
    }
    mean /= static_cast<double>(used);
    double ss = 0.0;
    for (std::size_t i = 0; i < used; ++i) {
        ss += (v[i] - mean) * (v[i] - mean);
    }
    const double var = ss / static_cast<double>(used - 1);
    if (var <= 0.0) {
        return make_report("drift", 0.0, 1.0, alpha, true);
    }
    double t = 0.0;
    double c2 = 0.0;
    const double centre = 0.5 * static_cast<double>(drift_blocks - 1);
    for (std::size_t b = 0; b < drift_blocks; ++b) {
        double block_mean = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
            block_mean += v[b * len + i];
        }
        block_mean /= static_cast<double>(len);
        const double c = static_cast<double>(b) - centre;
        t += c * block_mean;
        c2 += c * c;
    }
    const double z = t / std::sqrt(var / static_cast<double>(len) * c2);
    return make_report("drift", z, stats::two_sided_normal_p(z), alpha);
}

/// Runs, autocorrelation (lags 1..10) and block-mean drift. Any rejection
/// points at structure an i.i.d. description misses.
inline std::vector<TestReport> fine_structure_tests(const TimeSeries& series,
                                                    double alpha = default_alpha) {
    check_alpha(alpha);
    if (series.size() < 100) {
        throw InvalidSpec("fine_structure_tests: series needs at least 100 values");
    }
    return {runs_test(series, alpha), autocorrelation_test(series, alpha),
            drift_test(series, alpha)};
}

} // namespace spce
