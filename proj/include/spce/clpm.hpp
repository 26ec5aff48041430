#pragma once

// Contextual local probabilistic models.
//
// A run draws source parameters (l1, l2) for the signal pair and, at the moment
// of measurement, intrinsic apparatus parameters lx and ly on each side.
// Responses are deterministic functions of local data only: the Response type
// has no slot for the remote signal, remote apparatus or remote setting, so
// locality holds by construction.
//
// Two executable protocols share one spec:
//   clpm_simulate          one (lx, ly) draw per emission, outcomes in {-1,0,+1}
//   clpm_marginalized_run  k (lx, ly) draws per emission, averaged responses
// They have the same expectation but different output distributions.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "spce/error.hpp"
#include "spce/events.hpp"
#include "spce/rng.hpp"

namespace spce {

/// What one side's polarizer perceives of the signal: a polarization angle
/// and a free auxiliary variable.
struct SignalParams {
    double angle = 0.0;
    double aux = 0.0;
    auto operator<=>(const SignalParams&) const = default;
};

struct SourcePair {
    SignalParams alice;
    SignalParams bob;
    auto operator<=>(const SourcePair&) const = default;
};

/// Intrinsic state of a polarizer/detector at the moment of measurement.
struct ApparatusParams {
    double level = 0.0;
    double jitter = 0.0;
    auto operator<=>(const ApparatusParams&) const = default;
};

using SourceSampler = std::function<SourcePair(RngStream&)>;
using ApparatusSampler = std::function<ApparatusParams(RngStream&)>;
using Response = std::function<int(const SignalParams&, const ApparatusParams&, double setting)>;
using TimeTagger =
    std::function<double(const SignalParams&, const ApparatusParams&, double setting)>;

struct ClpmSpec {
    SourceSampler source;
    ApparatusSampler apparatus_a;
    ApparatusSampler apparatus_b;
    Response response_a;
    Response response_b;
    TimeTagger delay_a;  ///< optional
    TimeTagger delay_b;  ///< optional
    double emission_spacing = 1.0;

    void validate() const {
        if (!source || !apparatus_a || !apparatus_b) {
            throw InvalidSpec("clpm: source and apparatus samplers are required");
        }
        if (!response_a || !response_b) {
            throw InvalidSpec("clpm: both response functions are required");
        }
        if (!(emission_spacing > 0.0)) {
            throw InvalidSpec("clpm: emission spacing must be positive");
        }
    }
};

/// A CLPM whose hidden-variable supports are finite, so the expectation sums can
/// be enumerated exactly.
struct FiniteClpm {
    DiscreteDistribution<SourcePair> source;
    DiscreteDistribution<ApparatusParams> apparatus_a;
    DiscreteDistribution<ApparatusParams> apparatus_b;
    Response response_a;
    Response response_b;
    TimeTagger delay_a;
    TimeTagger delay_b;
    double emission_spacing = 1.0;

    /// Sampling view of the same model.
    ClpmSpec spec() const {
        return {[src = source](RngStream& r) { return src.sample(r); },
                [app = apparatus_a](RngStream& r) { return app.sample(r); },
                [app = apparatus_b](RngStream& r) { return app.sample(r); },
                response_a,
                response_b,
                delay_a,
                delay_b,
                emission_spacing};
    }
};

namespace detail {

inline int checked_response(const Response& f, const SignalParams& s, const ApparatusParams& a,
                            double setting) {
    const int v = f(s, a, setting);
    check_outcome(v);
    return v;
}

inline double time_tag(const TimeTagger& tagger, std::uint64_t trial, double spacing,
                       const SignalParams& s, const ApparatusParams& a, double setting) {
    if (!tagger) {
        return static_cast<double>(trial);
    }
    return static_cast<double>(trial) * spacing + tagger(s, a, setting);
}

} // namespace detail

/// One apparatus draw per side per emission.
inline EventStreams clpm_simulate(const ClpmSpec& spec, const SettingPair& settings,
                                  std::uint64_t n_emissions, RngStream& rng) {
    spec.validate();
    if (n_emissions < 1) {
        throw InvalidSpec("clpm_simulate: n_emissions must be >= 1");
    }
    EventStreams out;
    out.alice.reserve(n_emissions);
    out.bob.reserve(n_emissions);
    for (std::uint64_t t = 0; t < n_emissions; ++t) {
        const SourcePair src = spec.source(rng);
        const ApparatusParams ax = spec.apparatus_a(rng);
        const ApparatusParams ay = spec.apparatus_b(rng);
        const int a = detail::checked_response(spec.response_a, src.alice, ax, settings.alice_angle);
        const int b = detail::checked_response(spec.response_b, src.bob, ay, settings.bob_angle);
        out.alice.push_back({t, settings.alice,
                             detail::time_tag(spec.delay_a, t, spec.emission_spacing, src.alice, ax,
                                              settings.alice_angle),
                             a});
        out.bob.push_back({t, settings.bob,
                           detail::time_tag(spec.delay_b, t, spec.emission_spacing, src.bob, ay,
                                            settings.bob_angle),
                           b});
    }
    return out;
}

/// Exact joint law P(a, b | x, y) over {-1, 0, +1}^2, indexed [a + 1][b + 1],
/// by enumerating every (l1, l2, lx, ly).
inline std::array<std::array<double, 3>, 3> clpm_exact_joint(const FiniteClpm& m, double a_angle,
                                                            double b_angle) {
    std::array<std::array<double, 3>, 3> p{};
    const auto& src = m.source;
    for (std::size_t s = 0; s < src.size(); ++s) {
        const auto& pair = src.support()[s];
        for (std::size_t x = 0; x < m.apparatus_a.size(); ++x) {
            const int a = detail::checked_response(m.response_a, pair.alice,
                                                   m.apparatus_a.support()[x], a_angle);
            const double wsx = src.weights()[s] * m.apparatus_a.weights()[x];
            for (std::size_t y = 0; y < m.apparatus_b.size(); ++y) {
                const int b = detail::checked_response(m.response_b, pair.bob,
                                                       m.apparatus_b.support()[y], b_angle);
                p[static_cast<std::size_t>(a + 1)][static_cast<std::size_t>(b + 1)] +=
                    wsx * m.apparatus_b.weights()[y];
            }
        }
    }
    return p;
}

/// sum P(l1, l2) Px(lx) Py(ly) A(l1, lx) B(l2, ly), zero outcomes included.
inline double clpm_expectation_exact(const FiniteClpm& m, double a_angle, double b_angle) {
    const auto& src = m.source;
    double e = 0.0;
    for (std::size_t s = 0; s < src.size(); ++s) {
        const auto& pair = src.support()[s];
        for (std::size_t x = 0; x < m.apparatus_a.size(); ++x) {
            const int a = detail::checked_response(m.response_a, pair.alice,
                                                   m.apparatus_a.support()[x], a_angle);
            if (a == 0) {
                continue;
            }
            for (std::size_t y = 0; y < m.apparatus_b.size(); ++y) {
                const int b = detail::checked_response(m.response_b, pair.bob,
                                                       m.apparatus_b.support()[y], b_angle);
                e += src.weights()[s] * m.apparatus_a.weights()[x] * m.apparatus_b.weights()[y] *
                     static_cast<double>(a * b);
            }
        }
    }
    return e;
}

/// Exact local marginal E(A | x) (or E(B | y) for Side::bob).
inline double clpm_marginal_exact(const FiniteClpm& m, Side side, double angle) {
    const auto& app = side == Side::alice ? m.apparatus_a : m.apparatus_b;
    const auto& resp = side == Side::alice ? m.response_a : m.response_b;
    double e = 0.0;
    for (std::size_t s = 0; s < m.source.size(); ++s) {
        const auto& sig = side == Side::alice ? m.source.support()[s].alice
                                              : m.source.support()[s].bob;
        for (std::size_t x = 0; x < app.size(); ++x) {
            e += m.source.weights()[s] * app.weights()[x] *
                 detail::checked_response(resp, sig, app.support()[x], angle);
        }
    }
    return e;
}

struct MarginalizedRun {
    CorrelationEstimate estimate;
    std::vector<double> outputs;  ///< one averaged product per source draw
};

/// Per source draw: k apparatus pairs, average each side's responses, output
/// the product of the averages; the estimate is the mean of N outputs.
inline MarginalizedRun clpm_marginalized_run(const ClpmSpec& spec, const SettingPair& settings,
                                             std::uint64_t n, std::uint64_t k, RngStream& rng) {
    spec.validate();
    if (n < 1 || k < 1) {
        throw InvalidSpec("clpm_marginalized_run: N and k must be >= 1");
    }
    MarginalizedRun run;
    run.outputs.reserve(n);
    const double inv_k = 1.0 / static_cast<double>(k);
    for (std::uint64_t t = 0; t < n; ++t) {
        const SourcePair src = spec.source(rng);
        long sum_a = 0;
        long sum_b = 0;
        for (std::uint64_t r = 0; r < k; ++r) {
            const ApparatusParams ax = spec.apparatus_a(rng);
            const ApparatusParams ay = spec.apparatus_b(rng);
            sum_a += detail::checked_response(spec.response_a, src.alice, ax, settings.alice_angle);
            sum_b += detail::checked_response(spec.response_b, src.bob, ay, settings.bob_angle);
        }
        run.outputs.push_back((static_cast<double>(sum_a) * inv_k) *
                              (static_cast<double>(sum_b) * inv_k));
    }
    run.estimate = estimate_mean(run.outputs);
    return run;
}

// ---------------------------------------------------------------------------
// Default photon kernel
//
// Source: one hidden polarization angle theta ~ U[0, pi) shared by both
// signals, Bob's signal polarized orthogonally to Alice's, plus an independent
// per-side auxiliary u ~ U[0, 1].
// Apparatus: level ~ U[0, 1] (click threshold), jitter ~ U[0, 1].
// Response at setting s, with d = theta - s (Bob: theta + pi/2 - s):
//   +1 if cos^2 d > 1/2 + threshold_spread * level
//   -1 if sin^2 d > 1/2 + threshold_spread * level
//    0 otherwise (no click)
// Delay: time_scale * u * |sin 2d|^delay_exponent + jitter_scale * jitter.
// Signals far from either PBS axis both click less often and arrive later,
// which is what a short coincidence window selects against.

struct PhotonKernelParams {
    double time_scale = 1.0;
    double delay_exponent = 2.0;
    double threshold_spread = 0.05;
    double jitter_scale = 0.0;
    double emission_spacing = 10.0;
    /// Coincidence window width, in the same units as time tags.
    double window = 0.01;

    void validate() const {
        if (!(time_scale > 0.0)) {
            throw InvalidSpec("photon kernel: time_scale must be positive");
        }
        if (!(delay_exponent >= 0.0)) {
            throw InvalidSpec("photon kernel: delay_exponent must be non-negative");
        }
        if (!(threshold_spread >= 0.0 && threshold_spread <= 0.5)) {
            throw InvalidSpec("photon kernel: threshold_spread must lie in [0, 0.5]");
        }
        if (!(jitter_scale >= 0.0)) {
            throw InvalidSpec("photon kernel: jitter_scale must be non-negative");
        }
        if (!(emission_spacing > time_scale + jitter_scale + window)) {
            throw InvalidSpec("photon kernel: emission_spacing must exceed the largest delay "
                              "plus the window");
        }
        if (!(window > 0.0)) {
            throw InvalidSpec("photon kernel: window must be positive");
        }
    }
};

namespace detail {

inline Response photon_response(double threshold_spread, double angle_offset) {
    return [threshold_spread, angle_offset](const SignalParams& s, const ApparatusParams& app,
                                            double setting) {
        const double d = s.angle + angle_offset - setting;
        const double c = std::cos(d);
        const double pass = c * c;
        const double threshold = 0.5 + threshold_spread * app.level;
        if (pass > threshold) {
            return +1;
        }
        if (1.0 - pass > threshold) {
            return -1;
        }
        return 0;
    };
}

inline TimeTagger photon_delay(const PhotonKernelParams& p, double angle_offset) {
    return [p, angle_offset](const SignalParams& s, const ApparatusParams& app, double setting) {
        const double d = s.angle + angle_offset - setting;
        return p.time_scale * s.aux * std::pow(std::abs(std::sin(2.0 * d)), p.delay_exponent) +
               p.jitter_scale * app.jitter;
    };
}

} // namespace detail

inline ClpmSpec photon_kernel(const PhotonKernelParams& p = {}) {
    p.validate();
    const double half_pi = std::numbers::pi / 2.0;
    auto apparatus = [](RngStream& r) {
        const double level = r.uniform();
        return ApparatusParams{level, r.uniform()};
    };
    return {[](RngStream& r) {
                const double theta = sample_uniform_angle(r);
                const double ua = r.uniform();
                return SourcePair{{theta, ua}, {theta, r.uniform()}};
            },
            apparatus,
            apparatus,
            detail::photon_response(p.threshold_spread, 0.0),
            detail::photon_response(p.threshold_spread, half_pi),
            detail::photon_delay(p, 0.0),
            detail::photon_delay(p, half_pi),
            p.emission_spacing};
}

struct GridResolution {
    std::size_t angle_points = 360;
    std::size_t aux_points = 4;
    std::size_t level_points = 8;
    std::size_t jitter_points = 1;
};

/// The photon kernel on midpoint grids, for exact enumeration.
inline FiniteClpm photon_kernel_grid(const PhotonKernelParams& p = {}, GridResolution g = {}) {
    p.validate();
    if (g.angle_points == 0 || g.aux_points == 0 || g.level_points == 0 || g.jitter_points == 0) {
        throw InvalidSpec("photon kernel grid: resolutions must be positive");
    }
    auto mid = [](std::size_t i, std::size_t n) { return (static_cast<double>(i) + 0.5) / n; };
    std::vector<SourcePair> src;
    src.reserve(g.angle_points * g.aux_points * g.aux_points);
    for (std::size_t t = 0; t < g.angle_points; ++t) {
        const double theta = std::numbers::pi * mid(t, g.angle_points);
        for (std::size_t i = 0; i < g.aux_points; ++i) {
            for (std::size_t j = 0; j < g.aux_points; ++j) {
                src.push_back({{theta, mid(i, g.aux_points)}, {theta, mid(j, g.aux_points)}});
            }
        }
    }
    std::vector<ApparatusParams> app;
    for (std::size_t l = 0; l < g.level_points; ++l) {
        for (std::size_t j = 0; j < g.jitter_points; ++j) {
            app.push_back({mid(l, g.level_points), mid(j, g.jitter_points)});
        }
    }
    const double half_pi = std::numbers::pi / 2.0;
    auto source = DiscreteDistribution<SourcePair>::uniform(std::move(src));
    auto apparatus = DiscreteDistribution<ApparatusParams>::uniform(std::move(app));
    return {std::move(source),
            apparatus,
            apparatus,
            detail::photon_response(p.threshold_spread, 0.0),
            detail::photon_response(p.threshold_spread, half_pi),
            detail::photon_delay(p, 0.0),
            detail::photon_delay(p, half_pi),
            p.emission_spacing};
}

} // namespace spce
