#ifndef MCPARAREAL_MOMENT_MODELS_HPP
#define MCPARAREAL_MOMENT_MODELS_HPP

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "errors.hpp"
#include "integrator.hpp"
#include "macro_state.hpp"
#include "model.hpp"

namespace mcparareal {

enum class Enrichment { first_order, taylor };

/// Coarse propagator right-hand side on the packed macro state
/// [M_1, Sigma_1, alpha_1, ..., M_I, Sigma_I, alpha_I].
struct MomentODE {
    std::size_t regions = 1;
    Enrichment enrichment = Enrichment::first_order;
    bool fraction_dynamics = false;
    OdeRhs rhs;

    MacroState derivative(const MacroState& state, double t) const {
        const auto y = state.pack();
        std::vector<double> dy(y.size());
        rhs(t, y, dy);
        return MacroState::unpack(dy);
    }
};

/// Guard band of the Taylor-enriched plane-rotator closure.
inline constexpr double kRotatorSingularityBand = 1e-6;

namespace detail {

inline void moment_closure_rhs(const McKeanVlasovModel& model, double t, double mean, double variance,
                               const FieldValue& s, double& d_mean, double& d_variance) {
    const double b = model.diffusion(mean, s, t);
    const double b_x = model.diffusion_dx(mean, s, t);
    d_mean = model.drift(mean, s, t) + 0.5 * model.diffusion_dxx(mean, s, t);
    d_variance = (2.0 * model.drift_dx(mean, s, t) + b_x * b_x) * variance + b * b;
}

} // namespace detail

/// dM/dt = a + b_XX / 2, dSigma/dt = (2 a_X + b_X^2) Sigma + b^2, with every
/// coefficient evaluated at (M, f(M), t).
inline MomentODE unimodal_rhs(const McKeanVlasovModel& model) {
    MomentODE ode;
    ode.enrichment = Enrichment::first_order;
    ode.rhs = [model](double t, std::span<const double> y, std::span<double> dy) {
        detail::moment_closure_rhs(model, t, y[0], y[1], model.closure_at(y[0]), dy[0], dy[1]);
        dy[2] = 0.0;
    };
    return ode;
}

/// First-order closure with the mean-field statistic enriched by the second-order
/// Taylor term, E[f(X)] ~ f(M) + Sigma/2 f''(M). The plane rotator uses its
/// dedicated enriched system
///   dM/dt = -sin M + Sigma / (2 sin M)
///   dSigma/dt = -2 (-K - cos M + Sigma / (2 cos M)) Sigma + sigma^2.
inline MomentODE taylor_enriched_rhs(const McKeanVlasovModel& model) {
    MomentODE ode;
    ode.enrichment = Enrichment::taylor;
    if (model.rotator) {
        const double K = model.rotator->coupling;
        const double sigma2 = model.rotator->sigma_squared;
        ode.rhs = [K, sigma2](double, std::span<const double> y, std::span<double> dy) {
            const double M = y[0];
            const double S = y[1];
            const double sn = std::sin(M);
            const double cs = std::cos(M);
            if (std::abs(sn) < kRotatorSingularityBand || std::abs(cs) < kRotatorSingularityBand) {
                throw Singularity("Taylor-enriched rotator closure evaluated at sin(M)=0 or cos(M)=0");
            }
            dy[0] = -sn + S / (2.0 * sn);
            dy[1] = -2.0 * (-K - cs + S / (2.0 * cs)) * S + sigma2;
            dy[2] = 0.0;
        };
        return ode;
    }
    if (model.statistic != StatisticKind::mean_of_f) {
        throw std::invalid_argument("Taylor enrichment requires a mean-of-f statistic with f''");
    }
    ode.rhs = [model](double t, std::span<const double> y, std::span<double> dy) {
        FieldValue s;
        s.mean_f = model.f(y[0]) + 0.5 * y[1] * model.f_dd(y[0]);
        detail::moment_closure_rhs(model, t, y[0], y[1], s, dy[0], dy[1]);
        dy[2] = 0.0;
    };
    return ode;
}

/// Coarse model with artificially perturbed decay rates and diffusion.
inline MomentODE perturbed_ou_rhs(const PerturbedOUSpec& spec) {
    MomentODE ode;
    const double mean_rate = (spec.a + spec.a_E) * (1.0 + spec.eps_M);
    const double var_rate = 2.0 * spec.a * (1.0 + spec.eps_M);
    const double source = spec.B * spec.B * (1.0 + spec.eps_V) * (1.0 + spec.eps_V);
    ode.rhs = [=](double, std::span<const double> y, std::span<double> dy) {
        dy[0] = mean_rate * y[0];
        dy[1] = var_rate * y[1] + source;
        dy[2] = 0.0;
    };
    return ode;
}

/// Gaussian closure of the Burgers particle system: the mean travels at speed 1/2.
inline MomentODE burgers_rhs(const BurgersSpec& spec) {
    MomentODE ode;
    const double sigma2 = spec.sigma * spec.sigma;
    ode.rhs = [sigma2](double, std::span<const double> y, std::span<double> dy) {
        const double var = std::max(y[1], 0.0); // RK stages may dip below zero
        dy[0] = 0.5;
        dy[1] = -(2.0 / std::sqrt(2.0 * std::numbers::pi)) * std::sqrt(var) + sigma2;
        dy[2] = 0.0;
    };
    return ode;
}

/// Steady-state fraction weights V_i. The plain form exp(-V(peak_i)) is the
/// default; `gibbs` selects exp(-V(peak_i) / (2 sigma^2)).
inline std::vector<double> fraction_targets(const DoubleWellSpec& spec, const RegionPartition& partition,
                                            bool gibbs = false) {
    std::vector<double> w;
    double total = 0.0;
    for (double peak : partition.peaks) {
        const double scale = gibbs ? 1.0 / (2.0 * spec.sigma * spec.sigma) : 1.0;
        w.push_back(std::exp(-spec.potential(peak) * scale));
        total += w.back();
    }
    for (double& v : w) {
        v /= total;
    }
    return w;
}

/// Two-region partition of the double well: separatrix at the local maximum of
/// V, peaks at its minima.
inline RegionPartition double_well_partition(const DoubleWellSpec& spec) {
    const auto cp = spec.critical_points();
    if (cp.size() != 3) {
        throw InvalidPartition("potential has a single well");
    }
    return RegionPartition{{cp[1]}, {cp[0], cp[2]}};
}

/// One moment model per region, coupled through the mixture mean
/// sum_j alpha_j f(M_j), plus relaxation of the fractions towards V_i at rate
/// sigma^2 / (2 |peak_i - peak_{i-1}|).
inline MomentODE multimodal_rhs(const McKeanVlasovModel& model, const DoubleWellSpec& spec,
                                const RegionPartition& partition, bool gibbs = false) {
    const std::size_t I = partition.region_count();
    if (I < 2 || partition.peaks.size() != I) {
        throw InvalidPartition("multimodal closure needs at least two regions with known peaks");
    }
    if (model.statistic != StatisticKind::mean_of_f) {
        throw std::invalid_argument("multimodal closure requires a mean-of-f statistic");
    }
    std::vector<double> rate(I);
    for (std::size_t i = 0; i < I; ++i) {
        const double d = i == 0 ? std::abs(partition.peaks[1] - partition.peaks[0])
                                : std::abs(partition.peaks[i] - partition.peaks[i - 1]);
        if (!(d > 0.0)) {
            throw InvalidPartition("coincident mode peaks");
        }
        rate[i] = spec.sigma * spec.sigma / (2.0 * d);
    }
    const auto targets = fraction_targets(spec, partition, gibbs);

    MomentODE ode;
    ode.regions = I;
    ode.fraction_dynamics = true;
    ode.rhs = [model, rate, targets, I](double t, std::span<const double> y, std::span<double> dy) {
        FieldValue s;
        for (std::size_t j = 0; j < I; ++j) {
            s.mean_f += y[3 * j + 2] * model.f(y[3 * j]);
        }
        for (std::size_t i = 0; i < I; ++i) {
            detail::moment_closure_rhs(model, t, y[3 * i], y[3 * i + 1], s, dy[3 * i], dy[3 * i + 1]);
            dy[3 * i + 2] = -rate[i] * (y[3 * i + 2] - targets[i]);
        }
    };
    return ode;
}

inline MacroState integrate_macro(const MomentODE& ode, const MacroState& y0, double t0, double t1,
                                  const IntegratorConfig& cfg, IntegrationStats* stats = nullptr) {
    const DormandPrince54 solver(ode.rhs);
    MacroState out = MacroState::unpack(solver.integrate(y0.pack(), t0, t1, cfg, stats));
    for (std::size_t i = 0; i < out.size() && i < y0.size(); ++i) {
        out.regions[i].count = y0.regions[i].count;
    }
    return out;
}

} // namespace mcparareal

#endif
