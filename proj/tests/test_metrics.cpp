#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "mcparareal/metrics.hpp"

using namespace mcparareal;

namespace {

double brute_force_assignment(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<std::size_t> perm(y.size());
    std::iota(perm.begin(), perm.end(), 0);
    double best = INFINITY;
    do {
        double c = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            c += std::abs(x[i] - y[perm[i]]);
        }
        best = std::min(best, c / x.size());
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

ParticleEnsemble normal_sample(std::size_t P, double sd, std::uint64_t seed) {
    return sample_initial(InitialDistribution::normal(0.0, sd * sd), P, seed);
}

} // namespace

TEST(Wasserstein, Examples) {
    const ParticleEnsemble x({0.0, 1.0});
    EXPECT_EQ(wasserstein_1d(x, x), 0.0);
    EXPECT_DOUBLE_EQ(wasserstein_1d(x, ParticleEnsemble({1.0, 2.0})), 1.0);
    EXPECT_DOUBLE_EQ(wasserstein_1d(ParticleEnsemble({3.0, -1.0, 2.0}), ParticleEnsemble({0.5, 5.5, 4.5})), 6.5 / 3.0);
    EXPECT_THROW(wasserstein_1d(x, ParticleEnsemble({1.0})), UnsupportedComparison);
}

TEST(Wasserstein, EqualsBruteForceAssignment) {
    std::mt19937_64 gen(1);
    std::uniform_int_distribution<int> size(1, 8);
    std::normal_distribution<double> nd(0.0, 3.0);
    for (int trial = 0; trial < 100; ++trial) {
        const int P = size(gen);
        std::vector<double> x(P), y(P);
        for (int i = 0; i < P; ++i) {
            x[i] = nd(gen);
            y[i] = nd(gen) + 1.0;
        }
        EXPECT_NEAR(wasserstein_1d(x, y), brute_force_assignment(x, y), 1e-12);
    }
}

TEST(Wasserstein, MetricAxioms) {
    std::mt19937_64 gen(2);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x(20), y(20), z(20);
        for (int i = 0; i < 20; ++i) {
            x[i] = nd(gen);
            y[i] = 2.0 * nd(gen);
            z[i] = nd(gen) - 1.0;
        }
        EXPECT_EQ(wasserstein_1d(x, y), wasserstein_1d(y, x));
        EXPECT_LE(wasserstein_1d(x, z), wasserstein_1d(x, y) + wasserstein_1d(y, z) + 1e-12);
        EXPECT_GT(wasserstein_1d(x, y), 0.0);
        auto shuffled = x;
        std::shuffle(shuffled.begin(), shuffled.end(), gen);
        EXPECT_EQ(wasserstein_1d(x, shuffled), 0.0);
        std::vector<double> shifted(x);
        for (double& v : shifted) {
            v += 0.75;
        }
        EXPECT_NEAR(wasserstein_1d(x, shifted), 0.75, 1e-14);
    }
}

TEST(RelativeErrors, SingleTimePoint) {
    const auto r = relative_errors({1.0}, {2.0}, {3.0}, {4.0}, {0.5});
    EXPECT_DOUBLE_EQ(r.e_mean, 0.5);
    EXPECT_DOUBLE_EQ(r.e_var, 0.25);
    EXPECT_DOUBLE_EQ(r.e_wass, 0.25);
    const auto literal = relative_errors({1.0}, {2.0}, {3.0}, {4.0}, {0.5}, true);
    EXPECT_DOUBLE_EQ(literal.e_var, 0.5);
}

TEST(RelativeErrors, ZeroAtReference) {
    const std::vector<double> m{1.0, 2.0}, v{0.1, 0.2};
    const auto r = relative_errors(m, m, v, v, {0.0, 0.0});
    EXPECT_EQ(r.e_mean, 0.0);
    EXPECT_EQ(r.e_var, 0.0);
    EXPECT_EQ(r.e_wass, 0.0);
}

TEST(RelativeErrors, DegenerateReference) {
    EXPECT_THROW(relative_errors({1.0}, {0.0}, {1.0}, {1.0}, {}), DegenerateReference);
    EXPECT_THROW(relative_errors({1.0}, {1.0}, {1.0}, {0.0}, {}), DegenerateReference);
    EXPECT_NO_THROW(relative_errors({1.0}, {1.0}, {1.0}, {0.0}, {}, true));
}

TEST(RelativeErrors, SqrtNNormalizationInvariantUnderDoubling) {
    const std::vector<double> m{1.1, 0.9, 1.3}, mr{1.0, 1.0, 1.2}, v{0.5, 0.6, 0.4}, vr{0.5, 0.5, 0.5};
    auto twice = [](std::vector<double> a) {
        const auto b = a;
        a.insert(a.end(), b.begin(), b.end());
        return a;
    };
    const auto once = relative_errors(m, mr, v, vr, {});
    const auto doubled = relative_errors(twice(m), twice(mr), twice(v), twice(vr), {});
    EXPECT_NEAR(once.mean_error_norm, doubled.mean_error_norm, 1e-15);
    EXPECT_NEAR(once.variance_error_norm, doubled.variance_error_norm, 1e-15);
    EXPECT_NEAR(once.e_mean, doubled.e_mean, 1e-15);
    EXPECT_EQ(doubled.N, 6u);
    EXPECT_NEAR(doubled.sqrt_n_divisor, std::sqrt(6.0), 1e-15);
}

TEST(RelativeErrors, TraceErrorsInvariantUnderRelabeling) {
    PararealConfig cfg;
    cfg.N = 3;
    cfg.K = 3;
    cfg.fine = {0.1, 5};
    cfg.P = 64;
    cfg.coarse = perturbed_ou_rhs({-1.0, -0.5, 0.3, 0.5, 0.0});
    const auto model = make_perturbed_ou({-1.0, -0.5, 0.3});
    auto tr = run_micro_macro(cfg, model, InitialDistribution::normal(1.0, 0.2));
    const auto before = relative_errors(tr, 1);
    std::mt19937_64 gen(4);
    for (auto& row : tr.snapshots) {
        for (auto& e : row) {
            std::shuffle(e->positions.begin(), e->positions.end(), gen);
        }
    }
    const auto after = relative_errors(tr, 1);
    EXPECT_EQ(before.e_wass, after.e_wass);
    EXPECT_EQ(relative_errors(tr, 3).e_mean, 0.0);
    EXPECT_THROW(relative_errors(tr, 4), std::out_of_range);
}

TEST(StatisticalFloor, IdenticalReplicasGiveZero) {
    const auto e = normal_sample(100, 1.0, 1);
    EXPECT_EQ(statistical_floor({e, e, e}), 0.0);
    EXPECT_THROW(statistical_floor({e}), std::invalid_argument);
}

TEST(StatisticalFloor, ScalesLikeInverseSqrtP) {
    std::vector<ParticleEnsemble> small, large;
    for (std::uint64_t s = 0; s < 8; ++s) {
        small.push_back(normal_sample(10000, 1.0, 100 + s));
        large.push_back(normal_sample(160000, 1.0, 200 + s));
    }
    const double ratio = statistical_floor(large) / statistical_floor(small);
    EXPECT_NEAR(ratio, 0.25, 0.25 * 0.25);
}

TEST(StatisticalFloor, ScalesWithStandardDeviation) {
    std::vector<ParticleEnsemble> a, b;
    for (std::uint64_t s = 0; s < 8; ++s) {
        a.push_back(normal_sample(10000, 1.0, 300 + s));
        b.push_back(normal_sample(10000, std::sqrt(2.0), 400 + s));
    }
    EXPECT_NEAR(statistical_floor(b) / statistical_floor(a), std::sqrt(2.0), 0.2 * std::sqrt(2.0));
}

TEST(StatisticalFloor, TrajectoryFloorOfIdenticalTrajectoriesIsZero) {
    std::vector<ParticleEnsemble> t{normal_sample(50, 1.0, 1), normal_sample(50, 1.0, 2)};
    for (auto& e : t) {
        for (double& x : e.positions) {
            x += 3.0;
        }
    }
    const auto r = trajectory_floor({t, t});
    EXPECT_EQ(r.e_mean, 0.0);
    EXPECT_EQ(r.e_wass, 0.0);
    auto u = t;
    u[1] = normal_sample(50, 1.0, 3);
    for (double& x : u[1].positions) {
        x += 3.0;
    }
    EXPECT_GT(trajectory_floor({t, u}).e_wass, 0.0);
}
