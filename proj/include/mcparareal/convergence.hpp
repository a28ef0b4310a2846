#ifndef MCPARAREAL_CONVERGENCE_HPP
#define MCPARAREAL_CONVERGENCE_HPP

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "errors.hpp"
#include "model.hpp"

namespace mcparareal {

/// Scalar affine propagators C(u) = G u + g and F(u) = F u + f over one slice.
struct AffinePropagatorPair {
    double G = 0.0;
    double F = 0.0;
    double g = 0.0;
    double f = 0.0;

    double rho_superlinear() const { return std::abs(F - G); }
    double rho_linear() const {
        if (!(std::abs(G) < 1.0)) {
            throw BoundInapplicable("linear bound requires |G| < 1");
        }
        return std::abs(F - G) / (1.0 - std::abs(G));
    }
};

/// Binomial coefficient C(n, k) as a double; 0 when k > n.
inline double binomial(long n, long k) {
    if (k < 0 || n < 0 || k > n) {
        return 0.0;
    }
    k = std::min(k, n - k);
    double c = 1.0;
    for (long j = 1; j <= k; ++j) {
        c = c * static_cast<double>(n - k + j) / static_cast<double>(j);
    }
    return c < 9e15 ? std::round(c) : c;
}

/// Closed-form value of ||M(beta)^k||_inf:
///   |beta| < 1: min(((1 - |beta|^(N-1)) / (1 - |beta|))^k, C(N-1, k))
///   otherwise: |beta|^(N-k-1) C(N-1, k)
/// The geometric sum at |beta| -> 1 is replaced by its limit N - 1, and k = 0
/// returns the norm of the identity.
inline double m_power_inf_norm(double beta, int N, int k) {
    if (N < 1 || k < 0) {
        throw std::invalid_argument("m_power_inf_norm requires N >= 1 and k >= 0");
    }
    if (k == 0) {
        return 1.0;
    }
    const double b = std::abs(beta);
    const double binom = binomial(N - 1, k);
    if (b < 1.0) {
        const double geometric = 1.0 - b < 1e-12 ? static_cast<double>(N - 1)
                                                 : (1.0 - std::pow(b, N - 1)) / (1.0 - b);
        return std::min(std::pow(geometric, k), binom);
    }
    if (binom == 0.0) {
        return 0.0;
    }
    return std::pow(b, N - k - 1) * binom;
}

/// (rho_s^k / k!) prod_{j=1..k} (N - j) e0_max, rho_s = |F - G|.
inline double superlinear_bound(const AffinePropagatorPair& pair, int N, int k, double e0_max) {
    if (k < 0) {
        throw std::invalid_argument("iteration index must be non-negative");
    }
    const double rho = pair.rho_superlinear();
    double factor = 1.0;
    for (int j = 1; j <= k; ++j) {
        factor *= rho * static_cast<double>(N - j) / static_cast<double>(j);
    }
    return factor * e0_max;
}

/// rho_l^k e0_max, rho_l = |F - G| / (1 - |G|).
inline double linear_bound(const AffinePropagatorPair& pair, int /*N*/, int k, double e0_max) {
    if (k < 0) {
        throw std::invalid_argument("iteration index must be non-negative");
    }
    return std::pow(pair.rho_linear(), k) * e0_max;
}

/// Slice multipliers of the exact (fine) and perturbed (coarse) OU moment ODEs.
/// The mean pair has the inhomogeneity zero; the variance pair carries the
/// B^2 source terms in g and f.
inline std::pair<AffinePropagatorPair, AffinePropagatorPair> ou_propagator_multipliers(const PerturbedOUSpec& spec,
                                                                                       double dt_slice) {
    if (!(dt_slice > 0.0)) {
        throw std::invalid_argument("slice length must be positive");
    }
    AffinePropagatorPair mean;
    mean.F = std::exp((spec.a + spec.a_E) * dt_slice);
    mean.G = std::exp((spec.a + spec.a_E) * (1.0 + spec.eps_M) * dt_slice);

    // Sigma(t) = e^{lambda t} Sigma0 + s t phi(lambda t), phi(z) = expm1(z) / z
    auto source_gain = [dt_slice](double lambda, double s) {
        const double z = lambda * dt_slice;
        return s * dt_slice * (z == 0.0 ? 1.0 : std::expm1(z) / z);
    };
    AffinePropagatorPair var;
    var.F = std::exp(2.0 * spec.a * dt_slice);
    var.G = std::exp(2.0 * spec.a * (1.0 + spec.eps_M) * dt_slice);
    var.f = source_gain(2.0 * spec.a, spec.B * spec.B);
    var.g = source_gain(2.0 * spec.a * (1.0 + spec.eps_M), spec.B * spec.B * (1.0 + spec.eps_V) * (1.0 + spec.eps_V));
    return {mean, var};
}

struct Moments {
    double mean = 0.0;
    double variance = 0.0;
};

/// Exact moments of the unperturbed OU process:
/// M(t) = M0 e^{(a+a_E) t},  Sigma(t) = (Sigma0 + B^2/(2a)) e^{2at} - B^2/(2a),
/// evaluated in a form that is regular at a = 0.
inline Moments ou_exact_moments(const PerturbedOUSpec& spec, double M0, double Sigma0, double t) {
    Moments m;
    m.mean = M0 * std::exp((spec.a + spec.a_E) * t);
    const double z = 2.0 * spec.a * t;
    const double phi = z == 0.0 ? 1.0 : std::expm1(z) / z;
    m.variance = Sigma0 * std::exp(z) + spec.B * spec.B * t * phi;
    return m;
}

/// Per-slice costs of a non-pipelined Parareal run after k iterations.
struct CostModel {
    double T_C = 0.0;
    double T_F = 0.0;
    double T_R = 0.0;
    double T_M = 0.0;
    int N = 1;
    int k = 0;

    /// T_N = N T_C + k (N T_C + T_F + T_R + T_M)
    double wall_clock() const {
        return N * T_C + k * (N * T_C + T_F + T_R + T_M);
    }
};

/// S_N = N T_F / T_N.
inline double speedup(const CostModel& c) {
    if (c.T_C < 0.0 || c.T_F < 0.0 || c.T_R < 0.0 || c.T_M < 0.0 || c.N < 1 || c.k < 0) {
        throw InvalidCostModel("costs must be non-negative, N >= 1 and k >= 0");
    }
    const double denom = c.wall_clock();
    if (!(denom > 0.0)) {
        throw InvalidCostModel("cost model has zero wall-clock time");
    }
    return c.N * c.T_F / denom;
}

} // namespace mcparareal

#endif
