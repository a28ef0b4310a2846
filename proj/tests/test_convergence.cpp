#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "mcparareal/convergence.hpp"
#include "mcparareal/parareal.hpp"

using namespace mcparareal;

namespace {

using Matrix = std::vector<std::vector<double>>;

// M(beta) of size dim x dim: beta^(i-j-1) strictly below the diagonal.
Matrix m_beta(double beta, std::size_t dim) {
    Matrix m(dim, std::vector<double>(dim, 0.0));
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            m[i][j] = std::pow(beta, static_cast<double>(i - j - 1));
        }
    }
    return m;
}

Matrix multiply(const Matrix& a, const Matrix& b) {
    const std::size_t n = a.size();
    Matrix c(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t l = 0; l < n; ++l) {
            for (std::size_t j = 0; j < n; ++j) {
                c[i][j] += a[i][l] * b[l][j];
            }
        }
    }
    return c;
}

double dense_power_norm(double beta, std::size_t dim, int k) {
    Matrix p(dim, std::vector<double>(dim, 0.0));
    for (std::size_t i = 0; i < dim; ++i) {
        p[i][i] = 1.0;
    }
    const Matrix m = m_beta(beta, dim);
    for (int j = 0; j < k; ++j) {
        p = multiply(p, m);
    }
    double best = 0.0;
    for (const auto& row : p) {
        double s = 0.0;
        for (double v : row) {
            s += std::abs(v);
        }
        best = std::max(best, s);
    }
    return best;
}

} // namespace

TEST(MatrixNorm, TrivialCases) {
    for (int N : {1, 4, 9}) {
        EXPECT_EQ(m_power_inf_norm(0.7, N, 0), 1.0);
        for (int k = 1; k < N; ++k) {
            EXPECT_EQ(m_power_inf_norm(0.0, N, k), 1.0);
        }
    }
    EXPECT_THROW(m_power_inf_norm(0.5, 0, 1), std::invalid_argument);
}

TEST(MatrixNorm, BetaOneLimit) {
    const double below = m_power_inf_norm(1.0 - 1e-13, 8, 1);
    const double at = m_power_inf_norm(1.0, 8, 1);
    EXPECT_EQ(below, 7.0);
    EXPECT_EQ(at, 7.0);
    EXPECT_NEAR(m_power_inf_norm(1.0 - 1e-9, 8, 2), 21.0, 1e-6);
}

TEST(MatrixNorm, ClosedFormDominatesDenseOracle) {
    // The closed form bounds the N x N dense value from above; equality does
    // not hold in general.
    for (double beta : {0.1, 0.5, 0.9, 1.5}) {
        for (int N = 1; N <= 12; ++N) {
            for (int k = 0; k <= N; ++k) {
                const double closed = m_power_inf_norm(beta, N, k);
                EXPECT_GE(closed * (1.0 + 1e-12), dense_power_norm(beta, N, k)) << beta << " " << N << " " << k;
            }
        }
    }
}

TEST(MatrixNorm, ShiftMatrixPowersVanish) {
    EXPECT_EQ(dense_power_norm(0.0, 5, 5), 0.0);
    EXPECT_EQ(m_power_inf_norm(0.5, 5, 5), 0.0);
    EXPECT_EQ(m_power_inf_norm(1.5, 5, 7), 0.0);
}

TEST(Bounds, ArithmeticExample) {
    const AffinePropagatorPair pair{0.5, 0.6};
    EXPECT_NEAR(superlinear_bound(pair, 10, 2, 1.0), 0.36, 1e-15);
    EXPECT_NEAR(linear_bound(pair, 10, 2, 1.0), 0.04, 1e-15);
}

TEST(Bounds, VanishingCases) {
    const AffinePropagatorPair same{0.3, 0.3};
    EXPECT_EQ(superlinear_bound(same, 10, 1, 2.0), 0.0);
    EXPECT_EQ(linear_bound(same, 10, 1, 2.0), 0.0);
    const AffinePropagatorPair pair{0.5, 0.9};
    for (int k = 6; k < 9; ++k) {
        EXPECT_EQ(superlinear_bound(pair, 6, k, 1.0), 0.0);
    }
    EXPECT_EQ(superlinear_bound(pair, 6, 0, 3.0), 3.0);
}

TEST(Bounds, LinearBoundRequiresContractiveCoarse) {
    EXPECT_THROW(linear_bound({1.0, 0.5}, 10, 1, 1.0), BoundInapplicable);
    EXPECT_THROW(linear_bound({-1.2, 0.5}, 10, 1, 1.0), BoundInapplicable);
    EXPECT_NO_THROW(superlinear_bound({1.2, 0.5}, 10, 1, 1.0));
}

TEST(OUMultipliers, SubstitutionExample) {
    const auto [mean, var] = ou_propagator_multipliers({-1.0, -0.5, 0.01, 1.0, 0.3}, 1.0);
    EXPECT_NEAR(mean.F, std::exp(-1.5), 1e-15);
    EXPECT_NEAR(mean.G, std::exp(-3.0), 1e-15);
    EXPECT_NEAR(var.F, std::exp(-2.0), 1e-15);
    EXPECT_NEAR(var.G, std::exp(-4.0), 1e-15);
    const auto [mean0, var0] = ou_propagator_multipliers({-1.0, -0.5, 0.01, 1.0, 0.0}, 1.0);
    EXPECT_EQ(mean0.G - mean0.F, mean.G - mean.F); // independent of eps_V
    EXPECT_EQ(var0.G - var0.F, var.G - var.F);
}

TEST(OUMultipliers, EqualWithoutPerturbation) {
    const auto [mean, var] = ou_propagator_multipliers({-1.0, -0.5, 0.2, 0.0, 0.0}, 0.3);
    EXPECT_EQ(mean.F, mean.G);
    EXPECT_EQ(var.F, var.G);
    EXPECT_EQ(var.f, var.g);
    EXPECT_THROW(ou_propagator_multipliers({}, 0.0), std::invalid_argument);
}

TEST(OUMultipliers, SmallPerturbationIsProportional) {
    const double eps = 1e-3;
    for (double dt : {0.1, 1.0}) {
        const auto [mean, var] = ou_propagator_multipliers({-1.0, -0.5, 0.01, eps, 0.0}, dt);
        const double lam = -1.5;
        // |e^{lam dt} - e^{lam dt (1+eps)}| = |lam eps dt| e^{lam dt} + O(eps^2)
        EXPECT_NEAR(std::abs(mean.F - mean.G) / (std::abs(lam * eps * dt) * std::exp(lam * dt)), 1.0, 2e-3);
        EXPECT_NEAR(std::abs(var.F - var.G) / (std::abs(2.0 * eps * dt) * std::exp(-2.0 * dt)), 1.0, 3e-3);
    }
}

TEST(OUMultipliers, AffineSlicePropagatorsMatchExactMoments) {
    const PerturbedOUSpec spec{-1.0, -0.5, 0.3, 0.0, 0.0};
    const auto [mean, var] = ou_propagator_multipliers(spec, 0.7);
    const auto exact = ou_exact_moments(spec, 2.0, 0.5, 0.7);
    EXPECT_NEAR(mean.F * 2.0 + mean.f, exact.mean, 1e-15);
    EXPECT_NEAR(var.F * 0.5 + var.f, exact.variance, 1e-15);
}

TEST(ExactMoments, Examples) {
    const PerturbedOUSpec spec{-1.0, -0.5, 0.01, 0.0, 0.0};
    const auto start = ou_exact_moments(spec, 100.0, 0.2, 0.0);
    EXPECT_EQ(start.mean, 100.0);
    EXPECT_EQ(start.variance, 0.2);
    EXPECT_NEAR(ou_exact_moments(spec, 100.0, 0.0, 1.0).mean, 22.3130160148, 1e-9);
    EXPECT_NEAR(ou_exact_moments(spec, 0.0, 0.0, 60.0).variance, 5e-5, 1e-18);
}

TEST(ExactMoments, ZeroDriftLimit) {
    const PerturbedOUSpec spec{0.0, 0.0, 0.5, 0.0, 0.0};
    const auto m = ou_exact_moments(spec, 1.0, 0.1, 2.0);
    EXPECT_EQ(m.mean, 1.0);
    EXPECT_NEAR(m.variance, 0.1 + 0.25 * 2.0, 1e-15);
    const PerturbedOUSpec tiny{1e-12, 0.0, 0.5, 0.0, 0.0};
    EXPECT_NEAR(ou_exact_moments(tiny, 1.0, 0.1, 2.0).variance, 0.6, 1e-10);
}

TEST(ExactMoments, AgreesWithTimeStepping) {
    const PerturbedOUSpec spec{-0.7, 0.2, 0.4, 0.0, 0.0};
    double M = 1.5;
    double S = 0.3;
    const std::size_t steps = 200000;
    const double h = 1.0 / steps;
    for (std::size_t i = 0; i < steps; ++i) {
        // Heun on the linear ODE pair
        const double dM1 = (spec.a + spec.a_E) * M;
        const double dS1 = 2.0 * spec.a * S + spec.B * spec.B;
        const double dM2 = (spec.a + spec.a_E) * (M + h * dM1);
        const double dS2 = 2.0 * spec.a * (S + h * dS1) + spec.B * spec.B;
        M += 0.5 * h * (dM1 + dM2);
        S += 0.5 * h * (dS1 + dS2);
    }
    const auto exact = ou_exact_moments(spec, 1.5, 0.3, 1.0);
    EXPECT_NEAR(M, exact.mean, 1e-10);
    EXPECT_NEAR(S, exact.variance, 1e-10);
}

TEST(Speedup, Examples) {
    EXPECT_NEAR(speedup({1.0, 100.0, 1.0, 1.0, 10, 3}), 1000.0 / 346.0, 1e-12);
    EXPECT_NEAR(speedup({2.0, 50.0, 3.0, 4.0, 8, 0}), 25.0, 1e-12);
    EXPECT_LT(speedup({1.0, 1.0, 0.0, 0.0, 10, 10}), 1.0);
    EXPECT_THROW(speedup({0.0, 1.0, 0.0, 0.0, 10, 0}), InvalidCostModel);
    EXPECT_THROW(speedup({-1.0, 1.0, 0.0, 0.0, 10, 1}), InvalidCostModel);
}

TEST(Bounds, ClassicalOUMomentsStayBelowBounds) {
    for (double T0 : {0.1, 1.0}) {
        for (double eps : {0.2, 1.0}) {
            const PerturbedOUSpec spec{-1.0, -0.5, 0.01, eps, 0.0};
            const auto [mp, vp] = ou_propagator_multipliers(spec, T0);
            for (const auto& pair : {mp, vp}) {
                auto coarse = [&pair](std::size_t, double u) { return pair.G * u + pair.g; };
                auto fine = [&pair](std::size_t, double u) { return pair.F * u + pair.f; };
                const int N = 10;
                const auto tr = run_classical(N, N, 1.0, coarse, fine);
                auto max_err = [&](int k) {
                    double e = 0.0;
                    for (int n = 1; n <= N; ++n) {
                        e = std::max(e, std::abs(tr.fine_solution[n] - tr.iterates[k][n]));
                    }
                    return e;
                };
                const double e0 = max_err(0);
                // 1e-13 absorbs rounding in O(1) iterates once the bound is tiny
                for (int k = 0; k <= N; ++k) {
                    EXPECT_LE(max_err(k), superlinear_bound(pair, N, k, e0) * (1.0 + 1e-9) + 1e-13);
                    EXPECT_LE(max_err(k), linear_bound(pair, N, k, e0) * (1.0 + 1e-9) + 1e-13);
                }
            }
        }
    }
}
