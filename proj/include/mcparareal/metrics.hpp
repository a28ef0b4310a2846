#ifndef MCPARAREAL_METRICS_HPP
#define MCPARAREAL_METRICS_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "errors.hpp"
#include "parareal.hpp"
#include "particles.hpp"
#include "wasserstein.hpp"

namespace mcparareal {

struct ErrorOptions {
    /// Reference iterate; -1 selects the last one in the trace.
    int reference = -1;
    /// Divide E_var by the norm of the reference means, as printed, instead of
    /// the norm of the reference variances.
    bool literal_variance_denominator = false;
    /// Skip E_W (requires retained snapshots).
    bool wasserstein = true;
};

struct ErrorReport {
    double e_mean = 0.0;
    double e_var = 0.0;
    double e_wass = 0.0;
    /// Per time index n = 1..N.
    std::vector<double> mean_error;
    std::vector<double> variance_error;
    std::vector<double> wasserstein_error;
    /// 2-norms over n divided by sqrt(N).
    double mean_error_norm = 0.0;
    double variance_error_norm = 0.0;
    double wasserstein_error_norm = 0.0;
    double reference_mean_norm = 0.0;
    double reference_variance_norm = 0.0;
    std::size_t N = 0;
    double sqrt_n_divisor = 1.0;
};

namespace detail {

inline double normalized_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) {
        s += x * x;
    }
    return v.empty() ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

} // namespace detail

/// Relative errors from per-time-index series (n = 1..N). `wass` may be empty.
inline ErrorReport relative_errors(const std::vector<double>& mean, const std::vector<double>& mean_ref,
                                   const std::vector<double>& var, const std::vector<double>& var_ref,
                                   const std::vector<double>& wass, bool literal_variance_denominator = false) {
    const std::size_t N = mean.size();
    if (mean_ref.size() != N || var.size() != N || var_ref.size() != N || (!wass.empty() && wass.size() != N)) {
        throw std::invalid_argument("error series lengths differ");
    }
    if (N == 0) {
        throw std::invalid_argument("no time indices to compare");
    }
    ErrorReport r;
    r.N = N;
    r.sqrt_n_divisor = std::sqrt(static_cast<double>(N));
    for (std::size_t n = 0; n < N; ++n) {
        r.mean_error.push_back(std::abs(mean[n] - mean_ref[n]));
        r.variance_error.push_back(std::abs(var[n] - var_ref[n]));
    }
    r.wasserstein_error = wass;
    r.mean_error_norm = detail::normalized_norm(r.mean_error);
    r.variance_error_norm = detail::normalized_norm(r.variance_error);
    r.wasserstein_error_norm = detail::normalized_norm(r.wasserstein_error);
    r.reference_mean_norm = detail::normalized_norm(mean_ref);
    r.reference_variance_norm = detail::normalized_norm(var_ref);

    if (!(r.reference_mean_norm > 0.0)) {
        throw DegenerateReference("reference means have zero norm");
    }
    const double var_denominator = literal_variance_denominator ? r.reference_mean_norm : r.reference_variance_norm;
    if (!(var_denominator > 0.0)) {
        throw DegenerateReference("reference variances have zero norm");
    }
    r.e_mean = r.mean_error_norm / r.reference_mean_norm;
    r.e_var = r.variance_error_norm / var_denominator;
    r.e_wass = r.wasserstein_error_norm / r.reference_mean_norm;
    return r;
}

/// E_mean, E_var, E_W of iterate k against the reference iterate of the trace.
inline ErrorReport relative_errors(const PararealTrace& trace, int k, const ErrorOptions& opts = {}) {
    const int K = opts.reference < 0 ? trace.last_iteration() : opts.reference;
    if (k < 0 || k > trace.last_iteration() || K > trace.last_iteration()) {
        throw std::out_of_range("iteration not present in trace");
    }
    const std::size_t N = trace.slices();
    std::vector<double> m, mr, v, vr, w;
    for (std::size_t n = 1; n <= N; ++n) {
        m.push_back(trace.mean(k, n));
        mr.push_back(trace.mean(K, n));
        v.push_back(trace.variance(k, n));
        vr.push_back(trace.variance(K, n));
        if (opts.wasserstein) {
            w.push_back(wasserstein_1d(trace.ensemble(k, n), trace.ensemble(K, n)));
        }
    }
    return relative_errors(m, mr, v, vr, w, opts.literal_variance_denominator);
}

/// Mean pairwise W_1 among independent replicas of one distribution.
inline double statistical_floor(const std::vector<ParticleEnsemble>& replicas) {
    if (replicas.size() < 2) {
        throw std::invalid_argument("statistical floor needs at least two replicas");
    }
    double s = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < replicas.size(); ++a) {
        for (std::size_t b = a + 1; b < replicas.size(); ++b) {
            s += wasserstein_1d(replicas[a], replicas[b]);
            ++pairs;
        }
    }
    return s / static_cast<double>(pairs);
}

/// The relative error measures evaluated between independent fine trajectories
/// (index n = 0..N, each from a different seed), averaged over all pairs. This
/// is the level Parareal iterates cannot improve on in the same units.
inline ErrorReport trajectory_floor(const std::vector<std::vector<ParticleEnsemble>>& trajectories,
                                    bool literal_variance_denominator = false) {
    if (trajectories.size() < 2) {
        throw std::invalid_argument("statistical floor needs at least two replicas");
    }
    ErrorReport acc;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < trajectories.size(); ++a) {
        for (std::size_t b = a + 1; b < trajectories.size(); ++b) {
            const auto& x = trajectories[a];
            const auto& y = trajectories[b];
            if (x.size() != y.size() || x.size() < 2) {
                throw std::invalid_argument("replica trajectories must share N >= 1");
            }
            std::vector<double> m, mr, v, vr, w;
            for (std::size_t n = 1; n < x.size(); ++n) {
                m.push_back(empirical_mean(x[n]));
                mr.push_back(empirical_mean(y[n]));
                v.push_back(empirical_variance(x[n]));
                vr.push_back(empirical_variance(y[n]));
                w.push_back(wasserstein_1d(x[n], y[n]));
            }
            const ErrorReport r = relative_errors(m, mr, v, vr, w, literal_variance_denominator);
            acc.e_mean += r.e_mean;
            acc.e_var += r.e_var;
            acc.e_wass += r.e_wass;
            acc.mean_error_norm += r.mean_error_norm;
            acc.variance_error_norm += r.variance_error_norm;
            acc.wasserstein_error_norm += r.wasserstein_error_norm;
            acc.N = r.N;
            acc.sqrt_n_divisor = r.sqrt_n_divisor;
            ++pairs;
        }
    }
    const double inv = 1.0 / static_cast<double>(pairs);
    acc.e_mean *= inv;
    acc.e_var *= inv;
    acc.e_wass *= inv;
    acc.mean_error_norm *= inv;
    acc.variance_error_norm *= inv;
    acc.wasserstein_error_norm *= inv;
    return acc;
}

} // namespace mcparareal

#endif
