#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <complex>
#include <numbers>

#include "spce/quantum.hpp"

using namespace spce;
using namespace spce::quantum;

namespace {

constexpr double pi = std::numbers::pi;
using C = std::complex<double>;
using M4 = std::array<std::array<C, 4>, 4>;

// Reference trace Tr(rho (A(a) x B(b))) written out with plain arrays, with
// the singlet amplitudes entered by hand.
double oracle_singlet_correlation(double a, double b) {
    const double h = 1.0 / std::sqrt(2.0);
    const std::array<C, 4> psi{0.0, h, -h, 0.0};  // |HH>, |HV>, |VH>, |VV>
    auto pol = [](double t) {
        return std::array<std::array<double, 2>, 2>{
            {{std::cos(2 * t), std::sin(2 * t)}, {std::sin(2 * t), -std::cos(2 * t)}}};
    };
    const auto pa = pol(a);
    const auto pb = pol(b);
    M4 op{};
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            op[i][j] = pa[i / 2][j / 2] * pb[i % 2][j % 2];
        }
    }
    C acc = 0;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            acc += std::conj(psi[i]) * op[i][j] * psi[j];
        }
    }
    return acc.real();
}

double pass_probability(double filter, double state) {
    const auto rho = linear_polarization_state(state);
    return std::real((outcome_projector(polarization_observable(filter), +1) * rho.matrix()).trace());
}

DensityMatrix hh() { return product_state(linear_polarization_state(0), linear_polarization_state(0)); }

} // namespace

TEST(PolarizationObservable, MalusLaw) {
    EXPECT_NEAR(pass_probability(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(pass_probability(pi / 2, 0), 0.0, 1e-12);
    EXPECT_NEAR(pass_probability(pi / 3, 0), 0.25, 1e-12);
    for (int k = 0; k < 20; ++k) {
        const double t = 0.17 * k;
        EXPECT_NEAR(pass_probability(t, 0.3), std::pow(std::cos(t - 0.3), 2), 1e-12);
    }
}

TEST(PolarizationObservable, DichotomicSpectrumAndPeriod) {
    for (double a : {0.0, 0.4, 1.3, 2.9}) {
        const auto o = polarization_observable(a);
        const auto ev = eigenvalues_2x2(o.matrix());
        EXPECT_NEAR(ev[0], -1.0, 1e-12);
        EXPECT_NEAR(ev[1], 1.0, 1e-12);
        EXPECT_LT(o.matrix().max_abs_diff(polarization_observable(a + pi).matrix()), 1e-12);
        // +1 eigenvector is the polarization state at the same angle.
        EXPECT_NEAR(expectation(linear_polarization_state(a), o), 1.0, 1e-12);
    }
}

TEST(Expectation, SingletMarginalsVanish) {
    const auto rho = singlet();
    for (double a : {0.0, 0.3, 1.1, 2.5}) {
        EXPECT_NEAR(expectation(rho, alice_local(polarization_observable(a))), 0.0, 1e-12);
        EXPECT_NEAR(expectation(rho, bob_local(polarization_observable(a))), 0.0, 1e-12);
    }
}

TEST(Expectation, ProductEigenstate) {
    EXPECT_NEAR(expectation(hh(), alice_local(polarization_observable(0))), 1.0, 1e-12);
}

TEST(Expectation, SingletAgainstTraceOracleAndClosedForm) {
    const auto rho = singlet();
    for (int i = 0; i < 10; ++i) {
        for (int j = 0; j < 10; ++j) {
            const double a = pi * i / 10, b = pi * j / 10;
            const double e = expectation(rho, joint_observable(polarization_observable(a),
                                                               polarization_observable(b)));
            EXPECT_NEAR(e, oracle_singlet_correlation(a, b), 1e-12);
            EXPECT_NEAR(e, -std::cos(2 * (a - b)), 1e-10);
        }
    }
}

TEST(Expectation, SingletClosedFormOn20x20Grid) {
    const auto rho = singlet();
    for (int i = 0; i < 20; ++i) {
        for (int j = 0; j < 20; ++j) {
            const double a = pi * i / 20, b = pi * j / 20;
            EXPECT_NEAR(correlation(rho, a, b) + std::cos(2 * (a - b)), 0.0, 1e-10);
        }
    }
}

TEST(Expectation, DimensionMismatch) {
    EXPECT_THROW(expectation(singlet(), polarization_observable(0)), DimensionMismatch);
    EXPECT_THROW(expectation(linear_polarization_state(0), alice_local(polarization_observable(0))),
                 DimensionMismatch);
}

TEST(Expectation, NoSignallingAtOracleLevel) {
    auto rng = derive_stream(5, "q/nosig");
    for (int k = 0; k < 20; ++k) {
        const auto rho = product_state(random_qubit_state(rng), random_qubit_state(rng));
        const auto mixed = random_separable_state(rng).assemble();
        for (const auto& r : {rho, mixed, singlet()}) {
            const double a = rng.uniform(0, pi);
            const double ea = expectation(r, alice_local(polarization_observable(a)));
            for (double b : {0.1, 0.9, 2.0}) {
                // marginal from the joint outcome table at setting b
                const auto p = joint_probabilities(r, a, b);
                const double from_joint = (p[0][0] + p[0][1]) - (p[1][0] + p[1][1]);
                EXPECT_NEAR(from_joint, ea, 1e-12);
            }
        }
    }
}

TEST(Covariance, Examples) {
    const auto rho = singlet();
    auto A = [](double a) { return alice_local(polarization_observable(a)); };
    auto B = [](double b) { return bob_local(polarization_observable(b)); };
    EXPECT_NEAR(covariance(rho, A(0.4), B(0.4)), -1.0, 1e-12);
    EXPECT_NEAR(covariance(rho, A(0.2), B(0.2 + pi / 4)), 0.0, 1e-12);
    auto rng = derive_stream(6, "q/cov");
    for (int k = 0; k < 10; ++k) {
        const auto prod = product_state(random_qubit_state(rng), random_qubit_state(rng));
        EXPECT_NEAR(covariance(prod, A(rng.uniform(0, pi)), B(rng.uniform(0, pi))), 0.0, 1e-12);
    }
}

TEST(Covariance, RejectsNonSplitObservables) {
    const auto joint = joint_observable(polarization_observable(0), polarization_observable(0.3));
    const auto b = bob_local(polarization_observable(0.3));
    const auto a = alice_local(polarization_observable(0));
    EXPECT_THROW(covariance(singlet(), joint, b), InvalidSpec);
    EXPECT_THROW(covariance(singlet(), a, joint), InvalidSpec);
    EXPECT_THROW(covariance(singlet(), b, a), InvalidSpec);
    EXPECT_THROW(covariance(singlet(), polarization_observable(0), b), DimensionMismatch);
}

TEST(SeparableExpectation, Examples) {
    const auto H = linear_polarization_state(0);
    const auto V = linear_polarization_state(pi / 2);
    const SeparableState single({{1.0, H, H}});
    EXPECT_NEAR(separable_expectation(single, 0, 0), 1.0, 1e-12);
    const SeparableState mix({{0.5, H, H}, {0.5, V, V}});
    EXPECT_NEAR(separable_expectation(mix, 0, 0), 1.0, 1e-12);
    EXPECT_NEAR(separable_expectation(mix, 0, pi / 4), 0.0, 1e-12);
}

TEST(SeparableExpectation, MatchesAssembledMixture) {
    auto rng = derive_stream(7, "q/sep");
    for (int k = 0; k < 100; ++k) {
        const auto s = random_separable_state(rng);
        const auto rho = s.assemble();
        const double a = rng.uniform(0, pi), b = rng.uniform(0, pi);
        EXPECT_NEAR(separable_expectation(s, a, b), correlation(rho, a, b), 1e-10);
    }
}

TEST(SeparableState, Validation) {
    const auto H = linear_polarization_state(0);
    EXPECT_THROW(SeparableState({}), InvalidSpec);
    EXPECT_THROW(SeparableState({{0.5, H, H}}), InvalidSpec);
    EXPECT_THROW(SeparableState({{1.2, H, H}, {-0.2, H, H}}), InvalidSpec);
    EXPECT_THROW(SeparableState({{1.0, singlet(), H}}), DimensionMismatch);
}

TEST(ChshValue, TsirelsonAndSeparableBound) {
    EXPECT_NEAR(chsh_value(singlet(), 0, pi / 4, pi / 8, 3 * pi / 8), 2 * std::sqrt(2.0), 1e-10);
    auto rng = derive_stream(8, "q/chsh");
    for (int k = 0; k < 100; ++k) {
        const auto s = random_separable_state(rng);
        const double a = rng.uniform(0, pi), ap = rng.uniform(0, pi);
        const double b = rng.uniform(0, pi), bp = rng.uniform(0, pi);
        EXPECT_LE(chsh_value(s, a, ap, b, bp), 2 + 1e-10);
        EXPECT_LE(chsh_value(s.assemble(), a, ap, b, bp), 2 + 1e-10);
    }
}

TEST(ChshValue, DegenerateSettings) {
    for (double a : {0.0, 0.5}) {
        for (double b : {0.2, 1.0}) {
            EXPECT_NEAR(chsh_value(singlet(), a, a, b, b), 2 * std::abs(std::cos(2 * (a - b))), 1e-12);
        }
    }
}

TEST(DensityMatrix, Invariants) {
    EXPECT_THROW(DensityMatrix(CMatrix(2, {0.5, 0.0, 0.0, 0.6})), InvalidSpec);   // trace
    EXPECT_THROW(DensityMatrix(CMatrix(2, {0.5, 0.2, 0.0, 0.5})), InvalidSpec);   // Hermitian
    EXPECT_THROW(DensityMatrix(CMatrix(2, {1.2, 0.0, 0.0, -0.2})), InvalidSpec);  // PSD
    EXPECT_THROW(CMatrix(3), DimensionMismatch);
    EXPECT_NO_THROW(DensityMatrix(CMatrix(2, {0.5, 0.5, 0.5, 0.5})));
    auto rng = derive_stream(9, "q/states");
    for (int k = 0; k < 100; ++k) {
        const auto r = random_qubit_state(rng);
        EXPECT_NEAR(std::real(r.matrix().trace()), 1.0, 1e-12);
        EXPECT_GE(eigenvalues_2x2(r.matrix())[0], -1e-10);
    }
}

TEST(Observable, SpectrumBounds) {
    EXPECT_THROW(Observable(CMatrix(2, {1.5, 0.0, 0.0, -1.0})), InvalidSpec);
    EXPECT_THROW(Observable(CMatrix(2, {0.0, C(0, 1), C(0, 1), 0.0})), InvalidSpec);
    EXPECT_NO_THROW(Observable(CMatrix(2, {0.3, 0.0, 0.0, -0.2})));
}

TEST(SmearedObservable, DampsCorrelation) {
    const double w = 0.3;
    const auto oa = smeared_polarization_observable(0.0, w);
    const auto ob = smeared_polarization_observable(0.5, w);
    const double e = expectation(singlet(), joint_observable(oa, ob));
    EXPECT_NEAR(e, -std::exp(-4 * w * w) * std::cos(1.0), 1e-12);
    // Monte Carlo check of the damping factor against explicit angle noise.
    auto rng = derive_stream(10, "q/smear");
    double acc = 0;
    const int n = 200000;
    for (int k = 0; k < n; ++k) {
        acc += std::cos(2 * (0.7 + w * rng.normal()));
    }
    EXPECT_NEAR(acc / n, std::exp(-2 * w * w) * std::cos(1.4), 4.0 / std::sqrt(n));
}
