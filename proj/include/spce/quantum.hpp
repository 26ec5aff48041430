#pragma once

// Exact quantum predictions for two-sided polarization measurements.
//
// Everything lives in 2x2 (one polarization qubit) or 4x4 (one qubit per side)
// complex matrices. Polarization convention: a dichotomic measurement along
// angle a has the +1 eigenvector (cos a, sin a), so the singlet correlation is
// -cos 2(a - b) and the theory has period pi in each setting.

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "spce/error.hpp"
#include "spce/rng.hpp"

namespace spce::quantum {

using cplx = std::complex<double>;

inline constexpr double hermitian_tolerance = 1e-12;
inline constexpr double trace_tolerance = 1e-12;
inline constexpr double psd_tolerance = 1e-10;

/// Dense complex matrix of dimension 2 or 4.
class CMatrix {
public:
    explicit CMatrix(std::size_t dim = 2) : dim_(dim) {
        if (dim != 2 && dim != 4) {
            throw DimensionMismatch("matrix dimension must be 2 or 4, got " + std::to_string(dim));
        }
    }

    CMatrix(std::size_t dim, std::initializer_list<cplx> row_major) : CMatrix(dim) {
        if (row_major.size() != dim * dim) {
            throw DimensionMismatch("matrix initializer has wrong length");
        }
        std::size_t k = 0;
        for (const auto& v : row_major) {
            a_[k++] = v;
        }
    }

    static CMatrix identity(std::size_t dim) {
        CMatrix m(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            m(i, i) = 1.0;
        }
        return m;
    }

    /// |v><v| for a normalised or unnormalised ket.
    static CMatrix outer(const std::vector<cplx>& v) {
        CMatrix m(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            for (std::size_t j = 0; j < v.size(); ++j) {
                m(i, j) = v[i] * std::conj(v[j]);
            }
        }
        return m;
    }

    std::size_t dim() const noexcept { return dim_; }
    cplx& operator()(std::size_t i, std::size_t j) noexcept { return a_[i * dim_ + j]; }
    const cplx& operator()(std::size_t i, std::size_t j) const noexcept { return a_[i * dim_ + j]; }

    cplx trace() const noexcept {
        cplx t = 0.0;
        for (std::size_t i = 0; i < dim_; ++i) {
            t += (*this)(i, i);
        }
        return t;
    }

    CMatrix adjoint() const {
        CMatrix m(dim_);
        for (std::size_t i = 0; i < dim_; ++i) {
            for (std::size_t j = 0; j < dim_; ++j) {
                m(i, j) = std::conj((*this)(j, i));
            }
        }
        return m;
    }

    double max_abs_diff(const CMatrix& other) const {
        require_same_dim(other);
        double d = 0.0;
        for (std::size_t k = 0; k < dim_ * dim_; ++k) {
            d = std::max(d, std::abs(a_[k] - other.a_[k]));
        }
        return d;
    }

    bool is_hermitian(double tol = hermitian_tolerance) const {
        return max_abs_diff(adjoint()) <= tol;
    }

    /// Hermitian positive semidefinite test: Cholesky of (M + slack * I) succeeds
    /// iff every eigenvalue of M exceeds -slack.
    bool is_positive_semidefinite(double slack = psd_tolerance) const {
        std::array<cplx, 16> l{};
        for (std::size_t j = 0; j < dim_; ++j) {
            double pivot = (*this)(j, j).real() + slack;
            for (std::size_t k = 0; k < j; ++k) {
                pivot -= std::norm(l[j * dim_ + k]);
            }
            if (!(pivot > 0.0)) {
                return false;
            }
            const double root = std::sqrt(pivot);
            l[j * dim_ + j] = root;
            for (std::size_t i = j + 1; i < dim_; ++i) {
                cplx s = (*this)(i, j);
                for (std::size_t k = 0; k < j; ++k) {
                    s -= l[i * dim_ + k] * std::conj(l[j * dim_ + k]);
                }
                l[i * dim_ + j] = s / root;
            }
        }
        return true;
    }

    friend CMatrix operator*(const CMatrix& x, const CMatrix& y) {
        x.require_same_dim(y);
        CMatrix m(x.dim_);
        for (std::size_t i = 0; i < x.dim_; ++i) {
            for (std::size_t k = 0; k < x.dim_; ++k) {
                const cplx xik = x(i, k);
                for (std::size_t j = 0; j < x.dim_; ++j) {
                    m(i, j) += xik * y(k, j);
                }
            }
        }
        return m;
    }

    friend CMatrix operator+(CMatrix x, const CMatrix& y) {
        x.require_same_dim(y);
        for (std::size_t k = 0; k < x.dim_ * x.dim_; ++k) {
            x.a_[k] += y.a_[k];
        }
        return x;
    }

    friend CMatrix operator-(CMatrix x, const CMatrix& y) {
        x.require_same_dim(y);
        for (std::size_t k = 0; k < x.dim_ * x.dim_; ++k) {
            x.a_[k] -= y.a_[k];
        }
        return x;
    }

    friend CMatrix operator*(cplx s, CMatrix x) {
        for (std::size_t k = 0; k < x.dim_ * x.dim_; ++k) {
            x.a_[k] *= s;
        }
        return x;
    }

    /// Kronecker product of two 2x2 matrices.
    friend CMatrix kron(const CMatrix& x, const CMatrix& y) {
        if (x.dim_ != 2 || y.dim_ != 2) {
            throw DimensionMismatch("kron expects two 2x2 factors");
        }
        CMatrix m(4);
        for (std::size_t i = 0; i < 2; ++i) {
            for (std::size_t j = 0; j < 2; ++j) {
                for (std::size_t k = 0; k < 2; ++k) {
                    for (std::size_t l = 0; l < 2; ++l) {
                        m(2 * i + k, 2 * j + l) = x(i, j) * y(k, l);
                    }
                }
            }
        }
        return m;
    }

private:
    void require_same_dim(const CMatrix& other) const {
        if (dim_ != other.dim_) {
            throw DimensionMismatch("matrix dimensions differ: " + std::to_string(dim_) + " vs " +
                                    std::to_string(other.dim_));
        }
    }

    std::size_t dim_;
    std::array<cplx, 16> a_{};
};

/// Hermitian, unit trace, positive semidefinite.
class DensityMatrix {
public:
    explicit DensityMatrix(CMatrix m) : m_(std::move(m)) {
        if (!m_.is_hermitian()) {
            throw InvalidSpec("density matrix is not Hermitian");
        }
        if (std::abs(m_.trace() - 1.0) > trace_tolerance) {
            throw InvalidSpec("density matrix trace differs from 1");
        }
        if (!m_.is_positive_semidefinite()) {
            throw InvalidSpec("density matrix has a negative eigenvalue");
        }
    }

    const CMatrix& matrix() const noexcept { return m_; }
    std::size_t dim() const noexcept { return m_.dim(); }

private:
    CMatrix m_;
};

/// Hermitian with spectrum inside [-1, 1].
class Observable {
public:
    explicit Observable(CMatrix m) : m_(std::move(m)) {
        if (!m_.is_hermitian()) {
            throw InvalidSpec("observable is not Hermitian");
        }
        const auto id = CMatrix::identity(m_.dim());
        if (!(id - m_).is_positive_semidefinite() || !(id + m_).is_positive_semidefinite()) {
            throw InvalidSpec("observable spectrum leaves [-1, 1]");
        }
    }

    const CMatrix& matrix() const noexcept { return m_; }
    std::size_t dim() const noexcept { return m_.dim(); }

private:
    CMatrix m_;
};

/// Closed-form eigenvalues (ascending) of a 2x2 Hermitian matrix.
inline std::array<double, 2> eigenvalues_2x2(const CMatrix& m) {
    if (m.dim() != 2) {
        throw DimensionMismatch("eigenvalues_2x2 expects a 2x2 matrix");
    }
    const double a = m(0, 0).real();
    const double d = m(1, 1).real();
    const double mean = 0.5 * (a + d);
    const double radius = std::sqrt(0.25 * (a - d) * (a - d) + std::norm(m(0, 1)));
    return {mean - radius, mean + radius};
}

// ---------------------------------------------------------------------------
// States and observables used by the experiments.

/// Linearly polarized single-photon state at the given angle.
inline DensityMatrix linear_polarization_state(double angle) {
    return DensityMatrix(CMatrix::outer({std::cos(angle), std::sin(angle)}));
}

/// Dichotomic polarization measurement: +1 for the channel along `angle`,
/// -1 for the orthogonal one.
inline Observable polarization_observable(double angle) {
    const double c = std::cos(2.0 * angle);
    const double s = std::sin(2.0 * angle);
    return Observable(CMatrix(2, {c, s, s, -c}));
}

/// The polarization observable averaged over Gaussian setting noise of the
/// given width: E[A(angle + e)], e ~ N(0, width^2), which is A(angle) scaled by
/// exp(-2 width^2).
inline Observable smeared_polarization_observable(double angle, double width) {
    const double damp = std::exp(-2.0 * width * width);
    const double c = damp * std::cos(2.0 * angle);
    const double s = damp * std::sin(2.0 * angle);
    return Observable(CMatrix(2, {c, s, s, -c}));
}

/// Projector onto the +1 (outcome = +1) or -1 eigenspace of an observable with
/// spectrum {-1, +1}.
inline CMatrix outcome_projector(const Observable& obs, int outcome) {
    const auto id = CMatrix::identity(obs.dim());
    return outcome > 0 ? 0.5 * (id + obs.matrix()) : 0.5 * (id - obs.matrix());
}

inline Observable alice_local(const Observable& a) {
    if (a.dim() != 2) {
        throw DimensionMismatch("local observable must be 2x2");
    }
    return Observable(kron(a.matrix(), CMatrix::identity(2)));
}

inline Observable bob_local(const Observable& b) {
    if (b.dim() != 2) {
        throw DimensionMismatch("local observable must be 2x2");
    }
    return Observable(kron(CMatrix::identity(2), b.matrix()));
}

inline Observable joint_observable(const Observable& a, const Observable& b) {
    return Observable(kron(a.matrix(), b.matrix()));
}

/// (|HV> - |VH>) / sqrt 2.
inline DensityMatrix singlet() {
    const double h = std::numbers::sqrt2 / 2.0;
    return DensityMatrix(CMatrix::outer({0.0, h, -h, 0.0}));
}

inline DensityMatrix product_state(const DensityMatrix& alice, const DensityMatrix& bob) {
    if (alice.dim() != 2 || bob.dim() != 2) {
        throw DimensionMismatch("product_state expects two qubit states");
    }
    return DensityMatrix(kron(alice.matrix(), bob.matrix()));
}

// ---------------------------------------------------------------------------
// Expectations

/// Tr(rho * obs); the (roundoff) imaginary part is discarded.
inline double expectation(const DensityMatrix& rho, const Observable& obs) {
    if (rho.dim() != obs.dim()) {
        throw DimensionMismatch("state is " + std::to_string(rho.dim()) + "x" +
                                std::to_string(rho.dim()) + " but observable is " +
                                std::to_string(obs.dim()) + "x" + std::to_string(obs.dim()));
    }
    return (rho.matrix() * obs.matrix()).trace().real();
}

namespace detail {

inline constexpr double split_tolerance = 1e-10;

/// Recovers X from M = X (x) I, or throws when M has no such form.
inline CMatrix alice_factor(const CMatrix& m) {
    CMatrix x(2);
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t k = 0; k < 2; ++k) {
            x(i, k) = 0.5 * (m(2 * i, 2 * k) + m(2 * i + 1, 2 * k + 1));
        }
    }
    if (kron(x, CMatrix::identity(2)).max_abs_diff(m) > split_tolerance) {
        throw InvalidSpec("observable is not of the form A (x) I");
    }
    return x;
}

inline CMatrix bob_factor(const CMatrix& m) {
    CMatrix y(2);
    for (std::size_t k = 0; k < 2; ++k) {
        for (std::size_t l = 0; l < 2; ++l) {
            y(k, l) = 0.5 * (m(k, l) + m(2 + k, 2 + l));
        }
    }
    if (kron(CMatrix::identity(2), y).max_abs_diff(m) > split_tolerance) {
        throw InvalidSpec("observable is not of the form I (x) B");
    }
    return y;
}

} // namespace detail

/// cov(A, B | rho) = E(AB) - E(A) E(B) for A = A' (x) I and B = I (x) B'.
inline double covariance(const DensityMatrix& rho, const Observable& alice,
                         const Observable& bob) {
    if (rho.dim() != 4 || alice.dim() != 4 || bob.dim() != 4) {
        throw DimensionMismatch("covariance needs a two-qubit state and 4x4 observables");
    }
    (void)detail::alice_factor(alice.matrix());
    (void)detail::bob_factor(bob.matrix());
    const double eab = (rho.matrix() * alice.matrix() * bob.matrix()).trace().real();
    return eab - expectation(rho, alice) * expectation(rho, bob);
}

/// Correlation E(AB) for polarization settings a (Alice) and b (Bob).
inline double correlation(const DensityMatrix& rho, double a, double b) {
    return expectation(rho, joint_observable(polarization_observable(a),
                                             polarization_observable(b)));
}

/// P(outcome_a, outcome_b | a, b), outcomes in {+1, -1}; index 0 is +1.
inline std::array<std::array<double, 2>, 2> joint_probabilities(const DensityMatrix& rho, double a,
                                                               double b) {
    if (rho.dim() != 4) {
        throw DimensionMismatch("joint_probabilities needs a two-qubit state");
    }
    const auto oa = polarization_observable(a);
    const auto ob = polarization_observable(b);
    std::array<std::array<double, 2>, 2> p{};
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            const auto proj = kron(outcome_projector(oa, i == 0 ? +1 : -1),
                                   outcome_projector(ob, j == 0 ? +1 : -1));
            p[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                std::max(0.0, (rho.matrix() * proj).trace().real());
        }
    }
    return p;
}

// ---------------------------------------------------------------------------
// Separable mixtures sum_i p_i rho_i (x) rho~_i

struct SeparableComponent {
    double weight = 0.0;
    DensityMatrix alice;
    DensityMatrix bob;
};

class SeparableState {
public:
    explicit SeparableState(std::vector<SeparableComponent> components)
        : components_(std::move(components)) {
        if (components_.empty()) {
            throw InvalidSpec("separable state needs at least one component");
        }
        double total = 0.0;
        for (const auto& c : components_) {
            if (!(c.weight > 0.0)) {
                throw InvalidSpec("separable state weights must be positive");
            }
            if (c.alice.dim() != 2 || c.bob.dim() != 2) {
                throw DimensionMismatch("separable components must be qubit states");
            }
            total += c.weight;
        }
        if (std::abs(total - 1.0) > normalization_tolerance) {
            throw InvalidSpec("separable state weights do not sum to 1");
        }
    }

    const std::vector<SeparableComponent>& components() const noexcept { return components_; }

    /// The 4x4 mixture itself.
    DensityMatrix assemble() const {
        CMatrix m(4);
        for (const auto& c : components_) {
            m = m + cplx(c.weight) * kron(c.alice.matrix(), c.bob.matrix());
        }
        return DensityMatrix(m);
    }

private:
    std::vector<SeparableComponent> components_;
};

/// Component-wise sum_i p_i E(A | rho_i) E(B | rho~_i).
inline double separable_expectation(const SeparableState& state, double a, double b) {
    const auto oa = polarization_observable(a);
    const auto ob = polarization_observable(b);
    double e = 0.0;
    for (const auto& c : state.components()) {
        e += c.weight * expectation(c.alice, oa) * expectation(c.bob, ob);
    }
    return e;
}

/// |E(a,b) - E(a,b')| + |E(a',b) + E(a',b')|.
inline double chsh_value(const DensityMatrix& rho, double a, double a_prime, double b,
                         double b_prime) {
    return std::abs(correlation(rho, a, b) - correlation(rho, a, b_prime)) +
           std::abs(correlation(rho, a_prime, b) + correlation(rho, a_prime, b_prime));
}

inline double chsh_value(const SeparableState& state, double a, double a_prime, double b,
                         double b_prime) {
    return std::abs(separable_expectation(state, a, b) - separable_expectation(state, a, b_prime)) +
           std::abs(separable_expectation(state, a_prime, b) +
                    separable_expectation(state, a_prime, b_prime));
}

// ---------------------------------------------------------------------------
// Random instances

/// Qubit state with Bloch vector uniform in the unit ball.
inline DensityMatrix random_qubit_state(RngStream& rng) {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    do {
        x = rng.uniform(-1.0, 1.0);
        y = rng.uniform(-1.0, 1.0);
        z = rng.uniform(-1.0, 1.0);
    } while (x * x + y * y + z * z > 1.0);
    return DensityMatrix(CMatrix(2, {0.5 * (1.0 + z), cplx(0.5 * x, -0.5 * y),
                                     cplx(0.5 * x, 0.5 * y), 0.5 * (1.0 - z)}));
}

inline SeparableState random_separable_state(RngStream& rng, std::size_t max_components = 5) {
    const std::size_t k = 1 + rng.below(max_components);
    std::vector<double> w(k);
    double total = 0.0;
    for (auto& wi : w) {
        wi = 0.05 + rng.uniform();
        total += wi;
    }
    std::vector<SeparableComponent> comps;
    comps.reserve(k);
    double used = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        // Last weight absorbs roundoff so the sum is 1 to the last bit.
        const double wi = i + 1 == k ? 1.0 - used : w[i] / total;
        used += wi;
        comps.push_back({wi, random_qubit_state(rng), random_qubit_state(rng)});
    }
    return SeparableState(std::move(comps));
}

} // namespace spce::quantum
