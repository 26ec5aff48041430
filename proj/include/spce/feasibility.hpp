#pragma once

// Is a set of four pairwise distributions P(a_i, b_j), i, j in {1, 2}, the
// marginal family of one joint distribution over (A1, A2, B1, B2)?
//
// The joint lives on the 16 deterministic outcome assignments; the marginal
// constraints are linear equalities, so the question is LP feasibility. It is
// decided by phase one of a dense simplex with Bland's rule: the minimum total
// artificial slack is zero exactly when the family embeds.

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "spce/error.hpp"

namespace spce {

/// P(a, b) for outcomes +-1; index 0 is +1.
using PairDistribution = std::array<std::array<double, 2>, 2>;

/// Pairwise distributions keyed by setting pair, index (i - 1) * 2 + (j - 1).
using PairwiseFamily = std::array<PairDistribution, 4>;

struct PhaseOneResult {
    double infeasibility = 0.0;  ///< minimum of sum |Ax - b| over x >= 0
    std::vector<double> x;
};

/// Minimises sum of artificials for A x = b, x >= 0 (rows with b < 0 are
/// negated first).
inline PhaseOneResult simplex_phase_one(std::vector<std::vector<double>> a, std::vector<double> b) {
    const std::size_t m = a.size();
    if (m == 0 || b.size() != m) {
        throw InvalidSpec("simplex: malformed system");
    }
    const std::size_t n = a.front().size();
    for (std::size_t i = 0; i < m; ++i) {
        if (a[i].size() != n) {
            throw InvalidSpec("simplex: ragged constraint matrix");
        }
        if (b[i] < 0.0) {
            for (double& v : a[i]) {
                v = -v;
            }
            b[i] = -b[i];
        }
    }
    // Tableau columns: n structural, m artificial, then rhs.
    const std::size_t cols = n + m + 1;
    std::vector<std::vector<double>> t(m + 1, std::vector<double>(cols, 0.0));
    std::vector<std::size_t> basis(m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            t[i][j] = a[i][j];
        }
        t[i][n + i] = 1.0;
        t[i][cols - 1] = b[i];
        basis[i] = n + i;
    }
    // Objective row holds reduced costs of minimising sum of artificials.
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            if (j < n || j == cols - 1) {
                t[m][j] -= t[i][j];
            }
        }
    }
    constexpr double eps = 1e-12;
    for (std::size_t iter = 0; iter < 10000; ++iter) {
        std::size_t enter = cols;
        for (std::size_t j = 0; j + 1 < cols; ++j) {
            if (t[m][j] < -eps) {
                enter = j;  // Bland: lowest index
                break;
            }
        }
        if (enter == cols) {
            break;
        }
        std::size_t leave = m;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < m; ++i) {
            if (t[i][enter] > eps) {
                const double ratio = t[i][cols - 1] / t[i][enter];
                if (ratio < best - eps || (std::abs(ratio - best) <= eps && basis[i] < basis[leave])) {
                    best = ratio;
                    leave = i;
                }
            }
        }
        if (leave == m) {
            break;  // unbounded direction; cannot happen for a phase-one objective
        }
        const double pivot = t[leave][enter];
        for (double& v : t[leave]) {
            v /= pivot;
        }
        for (std::size_t i = 0; i <= m; ++i) {
            if (i != leave && t[i][enter] != 0.0) {
                const double f = t[i][enter];
                for (std::size_t j = 0; j < cols; ++j) {
                    t[i][j] -= f * t[leave][j];
                }
            }
        }
        basis[leave] = enter;
    }
    PhaseOneResult r;
    r.infeasibility = std::max(0.0, -t[m][cols - 1]);
    r.x.assign(n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        if (basis[i] < n) {
            r.x[basis[i]] = t[i][cols - 1];
        }
    }
    return r;
}

struct EmbeddingResult {
    bool embeddable = false;
    double infeasibility = 0.0;
    /// Joint weights over (a1, a2, b1, b2), index bit k set means component k is -1
    /// (component order a1, a2, b1, b2, most significant first).
    std::array<double, 16> joint{};
};

inline constexpr double embedding_tolerance = 1e-9;

inline EmbeddingResult embeds_in_joint(const PairwiseFamily& family,
                                       double tol = embedding_tolerance) {
    std::vector<std::vector<double>> a;
    std::vector<double> b;
    auto value = [](std::size_t idx, int component) {
        return ((idx >> (3 - component)) & 1U) ? -1 : +1;
    };
    for (int i = 1; i <= 2; ++i) {
        for (int j = 1; j <= 2; ++j) {
            const auto& target = family[static_cast<std::size_t>((i - 1) * 2 + (j - 1))];
            for (int oa = 0; oa < 2; ++oa) {
                for (int ob = 0; ob < 2; ++ob) {
                    std::vector<double> row(16, 0.0);
                    for (std::size_t w = 0; w < 16; ++w) {
                        const int ai = value(w, i - 1);
                        const int bj = value(w, 2 + (j - 1));
                        if (ai == (oa == 0 ? 1 : -1) && bj == (ob == 0 ? 1 : -1)) {
                            row[w] = 1.0;
                        }
                    }
                    a.push_back(std::move(row));
                    b.push_back(target[static_cast<std::size_t>(oa)][static_cast<std::size_t>(ob)]);
                }
            }
        }
    }
    const auto r = simplex_phase_one(std::move(a), std::move(b));
    EmbeddingResult out;
    out.infeasibility = r.infeasibility;
    out.embeddable = r.infeasibility <= tol;
    for (std::size_t w = 0; w < 16; ++w) {
        out.joint[w] = r.x[w];
    }
    return out;
}

/// Largest of the eight CHSH expressions E11 + E12 + E21 + E22 - 2 E_kl and
/// their negations. Together with no-signalling, a value <= 2 is equivalent to
/// embeddability (Fine); used as an independent cross-check of the LP.
inline double max_chsh_expression(const PairwiseFamily& family) {
    std::array<double, 4> e{};
    for (std::size_t k = 0; k < 4; ++k) {
        const auto& p = family[k];
        e[k] = p[0][0] + p[1][1] - p[0][1] - p[1][0];
    }
    const double sum = e[0] + e[1] + e[2] + e[3];
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < 4; ++k) {
        best = std::max(best, std::abs(sum - 2.0 * e[k]));
    }
    return best;
}

} // namespace spce
