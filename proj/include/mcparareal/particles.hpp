#ifndef MCPARAREAL_PARTICLES_HPP
#define MCPARAREAL_PARTICLES_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "errors.hpp"
#include "macro_state.hpp"
#include "model.hpp"
#include "rng.hpp"

namespace mcparareal {

/// Positions of P scalar particles; carrier of the empirical measure.
struct ParticleEnsemble {
    std::vector<double> positions;

    ParticleEnsemble() = default;
    explicit ParticleEnsemble(std::vector<double> x) : positions(std::move(x)) {}

    std::size_t size() const { return positions.size(); }
    bool operator==(const ParticleEnsemble&) const = default;
};

enum class NoiseMode { frozen, fresh };

inline const char* to_string(NoiseMode m) { return m == NoiseMode::frozen ? "frozen" : "fresh"; }

/// Brownian increments addressed by (slice n, step j, particle p) and, in fresh
/// mode, additionally by the Parareal iteration k.
struct NoisePlan {
    std::uint64_t master_seed = 0;
    NoiseMode mode = NoiseMode::frozen;

    NormalSource source() const { return NormalSource(master_seed); }

    std::uint32_t iteration_word(int k) const {
        return mode == NoiseMode::frozen ? 0u : static_cast<std::uint32_t>(k + 1);
    }

    void fill(std::span<double> out, std::size_t slice, std::size_t step, int k) const {
        source().fill(out, Stream::fine_noise, static_cast<std::uint32_t>(slice), static_cast<std::uint32_t>(step),
                      iteration_word(k));
    }
};

struct StepConfig {
    double dt = 1e-3;
    std::size_t steps_per_slice = 1;

    void validate() const {
        if (!(dt > 0.0)) {
            throw std::invalid_argument("fine time step must be positive");
        }
        if (steps_per_slice < 1) {
            throw std::invalid_argument("steps_per_slice must be at least 1");
        }
    }
};

namespace detail {

/// Neumaier-compensated sum.
template <typename Range, typename Op>
double compensated_sum(const Range& values, Op op) {
    double sum = 0.0;
    double comp = 0.0;
    for (const auto& v : values) {
        const double term = op(v);
        const double t = sum + term;
        if (std::abs(sum) >= std::abs(term)) {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    return sum + comp;
}

} // namespace detail

inline double empirical_mean(std::span<const double> x) {
    if (x.empty()) {
        throw std::invalid_argument("empty ensemble");
    }
    return detail::compensated_sum(x, [](double v) { return v; }) / static_cast<double>(x.size());
}

/// Population variance (divisor P).
inline double empirical_variance(std::span<const double> x) {
    const double m = empirical_mean(x);
    return detail::compensated_sum(x, [m](double v) { return (v - m) * (v - m); }) / static_cast<double>(x.size());
}

inline double empirical_mean(const ParticleEnsemble& e) { return empirical_mean(std::span<const double>(e.positions)); }
inline double empirical_variance(const ParticleEnsemble& e) {
    return empirical_variance(std::span<const double>(e.positions));
}

/// (1/P) sum_p phi(x_p).
template <typename Phi>
double estimate_qoi(const ParticleEnsemble& e, Phi&& phi) {
    if (e.size() == 0) {
        throw std::invalid_argument("empty ensemble");
    }
    return detail::compensated_sum(e.positions, phi) / static_cast<double>(e.size());
}

/// Per-region population moments and fractions over half-open regions.
/// Regions with fewer than two particles are flagged degenerate with zero variance;
/// empty regions take the partition's representative point as their mean.
inline MacroState region_statistics(const ParticleEnsemble& e, const RegionPartition& partition) {
    const std::size_t I = partition.region_count();
    MacroState s;
    s.regions.resize(I);
    if (I == 1) {
        auto& r = s.regions[0];
        r.count = e.size();
        r.fraction = 1.0;
        r.mean = empirical_mean(e);
        r.degenerate = e.size() < 2;
        r.variance = r.degenerate ? 0.0 : empirical_variance(e);
        return s;
    }
    std::vector<std::vector<double>> members(I);
    for (double x : e.positions) {
        members[partition.region_of(x)].push_back(x);
    }
    for (std::size_t i = 0; i < I; ++i) {
        auto& r = s.regions[i];
        r.count = members[i].size();
        r.fraction = static_cast<double>(r.count) / static_cast<double>(e.size());
        r.degenerate = r.count < 2;
        if (r.count == 0) {
            r.mean = partition.representative(i);
            r.variance = 0.0;
        } else {
            r.mean = empirical_mean(std::span<const double>(members[i]));
            r.variance = r.degenerate ? 0.0 : empirical_variance(std::span<const double>(members[i]));
        }
    }
    return s;
}

/// Mean-field statistic of one ensemble snapshot, plus scratch space.
struct EnsembleField {
    FieldValue common;
    std::vector<double> cdf;
    std::vector<std::uint32_t> order;

    /// Recomputes the statistic from `x`; called once per step before any particle moves.
    void update(const McKeanVlasovModel& model, std::span<const double> x) {
        const std::size_t P = x.size();
        switch (model.statistic) {
        case StatisticKind::mean_of_f:
            common.mean_f = detail::compensated_sum(x, model.f) / static_cast<double>(P);
            break;
        case StatisticKind::rotator_sum: {
            double s = 0.0;
            double c = 0.0;
            for (double v : x) {
                s += std::sin(v);
                c += std::cos(v);
            }
            common.sin_mean = s / static_cast<double>(P);
            common.cos_mean = c / static_cast<double>(P);
            break;
        }
        case StatisticKind::empirical_cdf: {
            // midpoint rank rule (r + 1/2) / P, ties broken by particle index
            order.resize(P);
            std::iota(order.begin(), order.end(), 0u);
            std::sort(order.begin(), order.end(), [x](std::uint32_t l, std::uint32_t r) {
                return x[l] < x[r] || (x[l] == x[r] && l < r);
            });
            cdf.resize(P);
            for (std::size_t r = 0; r < P; ++r) {
                cdf[order[r]] = (static_cast<double>(r) + 0.5) / static_cast<double>(P);
            }
            break;
        }
        }
    }

    FieldValue at(std::size_t p) const {
        FieldValue s = common;
        if (!cdf.empty()) {
            s.cdf = cdf[p];
        }
        return s;
    }
};

/// One Euler-Maruyama step in place:
/// x <- x + a(x, s, t) dt + b(x, s, t) sqrt(dt) xi, with s taken from the pre-step ensemble.
inline void em_step_inplace(const McKeanVlasovModel& model, std::span<double> x, double t, double dt,
                            std::span<const double> noise, EnsembleField& field) {
    if (noise.size() != x.size()) {
        throw std::invalid_argument("noise length must equal particle count");
    }
    if (!(dt > 0.0)) {
        throw std::invalid_argument("time step must be positive");
    }
    field.update(model, x);
    const double sqrt_dt = std::sqrt(dt);
    const bool per_particle = model.statistic == StatisticKind::empirical_cdf;
    FieldValue s = field.common;
    for (std::size_t p = 0; p < x.size(); ++p) {
        if (per_particle) {
            s.cdf = field.cdf[p];
        }
        const double xp = x[p];
        double next = xp + model.drift(xp, s, t) * dt + model.diffusion(xp, s, t) * sqrt_dt * noise[p];
        if (model.post_step) {
            next = model.post_step(next);
        }
        x[p] = next;
    }
}

inline ParticleEnsemble em_step(const McKeanVlasovModel& model, const ParticleEnsemble& ens, double t, double dt,
                                std::span<const double> noise) {
    ParticleEnsemble out = ens;
    EnsembleField field;
    em_step_inplace(model, out.positions, t, dt, noise, field);
    for (double v : out.positions) {
        if (!std::isfinite(v)) {
            throw NumericalBlowup("non-finite particle position after Euler-Maruyama step");
        }
    }
    return out;
}

/// Fine propagator over one time slice: steps_per_slice Euler-Maruyama steps
/// starting at t0, noise drawn from plan addresses (slice, j, p[, iteration]).
inline ParticleEnsemble propagate_fine(const McKeanVlasovModel& model, const ParticleEnsemble& ens,
                                       std::size_t slice, double t0, const StepConfig& cfg, const NoisePlan& plan,
                                       int iteration) {
    cfg.validate();
    ParticleEnsemble out = ens;
    std::vector<double> noise(ens.size());
    EnsembleField field;
    for (std::size_t j = 0; j < cfg.steps_per_slice; ++j) {
        plan.fill(noise, slice, j, iteration);
        const double t = t0 + static_cast<double>(j) * cfg.dt;
        em_step_inplace(model, out.positions, t, cfg.dt, noise, field);
        for (double v : out.positions) {
            if (!std::isfinite(v)) {
                throw NumericalBlowup("non-finite particle position in slice " + std::to_string(slice) +
                                          ", step " + std::to_string(j),
                                      static_cast<long>(slice), static_cast<long>(j));
            }
        }
    }
    return out;
}

/// Draws the initial ensemble from p_0 using the initial-sample stream of `seed`.
inline ParticleEnsemble sample_initial(const InitialDistribution& dist, std::size_t P, std::uint64_t seed) {
    if (P < 1) {
        throw std::invalid_argument("particle count must be at least 1");
    }
    ParticleEnsemble e;
    e.positions.resize(P);
    if (dist.kind == InitialDistribution::Kind::dirac) {
        std::fill(e.positions.begin(), e.positions.end(), dist.mean);
        return e;
    }
    std::vector<double> z(P);
    NormalSource(seed).fill(z, Stream::initial_sample, 0, 0, 0);
    if (dist.kind == InitialDistribution::Kind::normal) {
        const double sd = std::sqrt(dist.variance);
        for (std::size_t p = 0; p < P; ++p) {
            e.positions[p] = dist.mean + sd * z[p];
        }
    } else {
        for (std::size_t p = 0; p < P; ++p) {
            e.positions[p] = dist.sampler(z[p], p);
        }
    }
    return e;
}

} // namespace mcparareal

#endif
