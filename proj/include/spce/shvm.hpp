#pragma once

// Stochastic hidden-variable models: a label (l1, l2) is drawn once per pair,
// then each side runs its own independent random experiment with a kernel
// P(a | x, l1) or P(b | y, l2).

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "spce/error.hpp"
#include "spce/events.hpp"
#include "spce/rng.hpp"

namespace spce {

struct ShvmLabel {
    int alice = 0;
    int bob = 0;
    auto operator<=>(const ShvmLabel&) const = default;
};

using OutcomeKernel = DiscreteDistribution<int>;

/// Kernel over {+1, -1} with the given mean.
inline OutcomeKernel kernel_with_mean(double mean) {
    if (mean < -1.0 || mean > 1.0) {
        throw InvalidSpec("kernel mean must lie in [-1, 1]");
    }
    return OutcomeKernel({+1, -1}, {0.5 * (1.0 + mean), 0.5 * (1.0 - mean)});
}

inline double kernel_mean(const OutcomeKernel& k) {
    return k.expect([](int v) { return v; });
}

class ShvmSpec {
public:
    /// Kernels are keyed by (setting, local label).
    using KernelMap = std::map<std::pair<int, int>, OutcomeKernel>;

    ShvmSpec(std::vector<ShvmLabel> labels, DiscreteDistribution<std::size_t> label_dist,
             KernelMap kernel_a, KernelMap kernel_b)
        : labels_(std::move(labels)), label_dist_(std::move(label_dist)),
          kernel_a_(std::move(kernel_a)), kernel_b_(std::move(kernel_b)) {
        if (labels_.empty()) {
            throw InvalidSpec("shvm: no labels");
        }
        for (std::size_t idx : label_dist_.support()) {
            if (idx >= labels_.size()) {
                throw InvalidSpec("shvm: label distribution refers to an unknown label");
            }
        }
        for (const auto* kernels : {&kernel_a_, &kernel_b_}) {
            for (const auto& [key, k] : *kernels) {
                for (int v : k.support()) {
                    check_outcome(v);
                }
            }
        }
    }

    const std::vector<ShvmLabel>& labels() const noexcept { return labels_; }
    const DiscreteDistribution<std::size_t>& label_dist() const noexcept { return label_dist_; }

    const OutcomeKernel& kernel_a(int setting, int label) const {
        return lookup(kernel_a_, setting, label, "alice");
    }
    const OutcomeKernel& kernel_b(int setting, int label) const {
        return lookup(kernel_b_, setting, label, "bob");
    }

    /// Throws unless every label in the support has a kernel for both settings.
    void require_settings(int x, int y) const {
        for (std::size_t idx : label_dist_.support()) {
            (void)kernel_a(x, labels_[idx].alice);
            (void)kernel_b(y, labels_[idx].bob);
        }
    }

private:
    static const OutcomeKernel& lookup(const KernelMap& m, int setting, int label,
                                       const char* side) {
        auto it = m.find({setting, label});
        if (it == m.end()) {
            throw InvalidSpec(std::string("shvm: no ") + side + " kernel for setting " +
                              std::to_string(setting) + ", label " + std::to_string(label));
        }
        return it->second;
    }

    std::vector<ShvmLabel> labels_;
    DiscreteDistribution<std::size_t> label_dist_;
    KernelMap kernel_a_;
    KernelMap kernel_b_;
};

/// sum_l P(l) E(A | x, l1) E(B | y, l2).
inline double shvm_expectation_exact(const ShvmSpec& spec, int x, int y) {
    spec.require_settings(x, y);
    const auto& dist = spec.label_dist();
    double e = 0.0;
    for (std::size_t k = 0; k < dist.size(); ++k) {
        const auto& label = spec.labels()[dist.support()[k]];
        e += dist.weights()[k] * kernel_mean(spec.kernel_a(x, label.alice)) *
             kernel_mean(spec.kernel_b(y, label.bob));
    }
    return e;
}

struct ShvmLabelRecord {
    std::size_t label = 0;
    double mean_a = 0.0;
    double mean_b = 0.0;
    double product = 0.0;
};

struct ShvmRun {
    CorrelationEstimate estimate;
    std::vector<ShvmLabelRecord> records;
};

/// The repeated-dice protocol: for each of n_pairs labels, roll each side's
/// die k_repeats times, multiply the two sample means, then average.
inline ShvmRun shvm_run(const ShvmSpec& spec, int x, int y, std::uint64_t n_pairs,
                        std::uint64_t k_repeats, RngStream& rng) {
    if (n_pairs < 1 || k_repeats < 1) {
        throw InvalidSpec("shvm_run: n_pairs and k_repeats must be >= 1");
    }
    spec.require_settings(x, y);
    ShvmRun run;
    run.records.reserve(n_pairs);
    std::vector<double> products;
    products.reserve(n_pairs);
    const double inv_k = 1.0 / static_cast<double>(k_repeats);
    for (std::uint64_t p = 0; p < n_pairs; ++p) {
        const std::size_t idx = spec.label_dist().sample(rng);
        const auto& label = spec.labels()[idx];
        const auto& ka = spec.kernel_a(x, label.alice);
        const auto& kb = spec.kernel_b(y, label.bob);
        long sum_a = 0;
        long sum_b = 0;
        for (std::uint64_t r = 0; r < k_repeats; ++r) {
            sum_a += ka.sample(rng);
        }
        for (std::uint64_t r = 0; r < k_repeats; ++r) {
            sum_b += kb.sample(rng);
        }
        const double ma = static_cast<double>(sum_a) * inv_k;
        const double mb = static_cast<double>(sum_b) * inv_k;
        run.records.push_back({idx, ma, mb, ma * mb});
        products.push_back(ma * mb);
    }
    run.estimate = estimate_mean(products);
    return run;
}

/// Random finite spec over settings {1, 2}: n_labels labels, shared by all
/// settings, each kernel a +-1 die with a uniform random mean.
inline ShvmSpec random_shvm_spec(RngStream& rng, std::size_t n_labels) {
    std::vector<ShvmLabel> labels;
    std::vector<std::size_t> idx;
    std::vector<double> w;
    ShvmSpec::KernelMap ka;
    ShvmSpec::KernelMap kb;
    for (std::size_t l = 0; l < n_labels; ++l) {
        labels.push_back({static_cast<int>(l), static_cast<int>(l)});
        idx.push_back(l);
        w.push_back(0.05 + rng.uniform());
        for (int s = 1; s <= 2; ++s) {
            ka.emplace(std::pair{s, static_cast<int>(l)}, kernel_with_mean(rng.uniform(-1.0, 1.0)));
            kb.emplace(std::pair{s, static_cast<int>(l)}, kernel_with_mean(rng.uniform(-1.0, 1.0)));
        }
    }
    return ShvmSpec(std::move(labels),
                    DiscreteDistribution<std::size_t>::normalized(std::move(idx), std::move(w)),
                    std::move(ka), std::move(kb));
}

} // namespace spce
