#ifndef MCPARAREAL_PARAREAL_HPP
#define MCPARAREAL_PARAREAL_HPP

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <exception>
#include <functional>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "coupling.hpp"
#include "errors.hpp"
#include "macro_state.hpp"
#include "wasserstein.hpp"
#include "model.hpp"
#include "moment_models.hpp"
#include "particles.hpp"

namespace mcparareal {

/// Fork-join loop over [0, count). Work item i runs on worker i mod W; the
/// first failing index (lowest i) is rethrown after all workers join.
inline void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& body) {
    if (workers <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            body(i);
        }
        return;
    }
    const std::size_t W = std::min(workers, count);
    std::vector<std::exception_ptr> errors(count);
    {
        std::vector<std::jthread> pool;
        pool.reserve(W);
        for (std::size_t w = 0; w < W; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < count; i += W) {
                    try {
                        body(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

/// Which (k, n) ensembles a trace keeps in full.
struct SnapshotPolicy {
    bool keep_all = true;
    std::set<std::pair<int, std::size_t>> keep;

    bool wants(int k, std::size_t n) const { return keep_all || keep.contains({k, n}); }
};

/// State the subtracted coarse term C(.) of the correction starts from.
///   macro:       C(rho_n^k), the literal update
///   restriction: C(R(u_n^k)), so that F and C start from the same state when
///                matching moves particles across a separatrix
enum class CorrectionBase { macro, restriction };

inline const char* to_string(CorrectionBase b) { return b == CorrectionBase::macro ? "macro" : "restriction"; }

struct PararealConfig {
    std::size_t N = 10;
    int K = 10;
    double T0 = 1.0;
    StepConfig fine;
    std::size_t P = 10000;
    NoisePlan noise;
    RegionPartition partition;
    MomentODE coarse;
    IntegratorConfig integrator;
    std::size_t workers = 1;
    SnapshotPolicy snapshots;
    /// Stop once max_n W1(u_n^{k+1}, u_n^k) falls below this value; 0 disables.
    double stop_tolerance = 0.0;
    CorrectionBase correction = CorrectionBase::macro;

    void validate() const {
        if (N < 1) {
            throw std::invalid_argument("N must be at least 1");
        }
        if (K < 0 || static_cast<std::size_t>(K) > N) {
            throw std::invalid_argument("K must satisfy 0 <= K <= N");
        }
        if (!(T0 > 0.0)) {
            throw std::invalid_argument("T0 must be positive");
        }
        if (P < 1) {
            throw std::invalid_argument("P must be at least 1");
        }
        fine.validate();
        integrator.validate();
        partition.validate();
        if (!coarse.rhs) {
            throw std::invalid_argument("coarse moment model missing");
        }
        if (coarse.regions != partition.region_count()) {
            throw std::invalid_argument("coarse model region count differs from the partition");
        }
    }

    double slice_start(std::size_t n) const { return static_cast<double>(n) * T0; }
};

/// Wall-clock samples (seconds) of each propagator/operator invocation.
struct TimingLedger {
    std::vector<double> coarse;
    std::vector<double> fine;
    std::vector<double> restriction;
    std::vector<double> matching;

    static double mean(const std::vector<double>& v) {
        if (v.empty()) {
            return 0.0;
        }
        double s = 0.0;
        for (double x : v) {
            s += x;
        }
        return s / static_cast<double>(v.size());
    }
};

/// Gap between the corrected coarse fraction and the fraction realised by the
/// matched particles (matching does not move particles between regions).
struct FractionDiagnostic {
    int k = 0;
    std::size_t n = 0;
    std::size_t region = 0;
    double macro_fraction = 0.0;
    double micro_fraction = 0.0;
};

struct PararealTrace {
    /// macro[k][n] = rho_n^k
    std::vector<std::vector<MacroState>> macro;
    /// micro_stats[k][n] = R(u_n^k)
    std::vector<std::vector<MacroState>> micro_stats;
    std::vector<std::vector<std::optional<ParticleEnsemble>>> snapshots;
    std::vector<FractionDiagnostic> fraction_diagnostics;
    std::vector<std::string> warnings;
    TimingLedger timing;
    bool stopped_early = false;

    int last_iteration() const { return static_cast<int>(macro.size()) - 1; }
    std::size_t slices() const { return macro.empty() ? 0 : macro[0].size() - 1; }

    /// Whole-ensemble mean of u_n^k.
    double mean(int k, std::size_t n) const { return micro_stats[k][n].mixture_mean(); }
    /// Whole-ensemble population variance of u_n^k.
    double variance(int k, std::size_t n) const { return micro_stats[k][n].mixture_variance(); }

    const ParticleEnsemble& ensemble(int k, std::size_t n) const {
        const auto& s = snapshots.at(k).at(n);
        if (!s) {
            throw std::out_of_range("ensemble snapshot not retained for (k=" + std::to_string(k) +
                                    ", n=" + std::to_string(n) + ")");
        }
        return *s;
    }
};

namespace detail {

template <typename Fn>
auto timed(std::vector<double>& sink, Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    auto result = fn();
    sink.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    return result;
}

template <typename Fn>
auto with_context(int k, std::size_t n, Fn&& fn) {
    try {
        return fn();
    } catch (const PararealFailure&) {
        throw;
    } catch (const std::exception& e) {
        throw PararealFailure(std::string(e.what()) + " (iteration " + std::to_string(k) + ", slice " +
                                  std::to_string(n) + ")",
                              k, static_cast<int>(n));
    }
}

} // namespace detail

/// Sequential fine solution u_n, n = 0..N, from the same initial ensemble and
/// noise addresses the Parareal fine sweeps use.
inline std::vector<ParticleEnsemble> run_sequential_fine(const PararealConfig& cfg, const McKeanVlasovModel& model,
                                                         const ParticleEnsemble& initial) {
    std::vector<ParticleEnsemble> u{initial};
    u.reserve(cfg.N + 1);
    for (std::size_t n = 0; n < cfg.N; ++n) {
        u.push_back(propagate_fine(model, u.back(), n, cfg.slice_start(n), cfg.fine, cfg.noise, -1));
    }
    return u;
}

inline std::vector<ParticleEnsemble> run_sequential_fine(const PararealConfig& cfg, const McKeanVlasovModel& model,
                                                         const InitialDistribution& init) {
    return run_sequential_fine(cfg, model, sample_initial(init, cfg.P, cfg.noise.master_seed));
}

/// Micro-macro Parareal with a moment-ODE coarse propagator and a Monte Carlo
/// fine propagator.
///   k = 0:  rho_{n+1} = C(rho_n),  u_{n+1} = L(rho_{n+1})
///   k > 0:  rho_{n+1}^{k+1} = C(rho_n^{k+1}) + R(F(u_n^k)) - C(rho_n^k)
///           u_{n+1}^{k+1}   = M(rho_{n+1}^{k+1}, F(u_n^k))
/// All fine propagations of an iteration finish before its coarse sweep starts.
inline PararealTrace run_micro_macro(const PararealConfig& cfg, const McKeanVlasovModel& model,
                                     const ParticleEnsemble& initial) {
    cfg.validate();
    const std::size_t N = cfg.N;
    const RegionPartition& partition = cfg.partition;
    PararealTrace trace;

    auto coarse_step = [&](const MacroState& rho, std::size_t n) {
        return detail::timed(trace.timing.coarse, [&] {
            return integrate_macro(cfg.coarse, rho, cfg.slice_start(n), cfg.slice_start(n + 1), cfg.integrator);
        });
    };

    const MacroState rho0 = restrict_moments(initial, partition);
    const ParticleEnsemble shape = lifting_template(initial, partition, cfg.noise.master_seed);

    std::vector<MacroState> rho(N + 1);
    std::vector<MacroState> coarse_prev(N);
    std::vector<ParticleEnsemble> u(N + 1);
    rho[0] = rho0;
    for (std::size_t n = 0; n < N; ++n) {
        coarse_prev[n] = detail::with_context(0, n, [&] { return coarse_step(rho[n], n); });
        rho[n + 1] = coarse_prev[n];
    }
    u[0] = initial;
    std::vector<MatchDiagnostics> diag(N + 1);
    std::vector<double> match_time(N + 1, 0.0);
    std::vector<double> restrict_time(N + 1, 0.0);
    std::vector<MacroState> stats(N + 1);

    auto record = [&](int k) {
        parallel_for(N + 1, cfg.workers, [&](std::size_t n) {
            const auto start = std::chrono::steady_clock::now();
            stats[n] = restrict_moments(u[n], partition);
            restrict_time[n] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        });
        trace.timing.restriction.insert(trace.timing.restriction.end(), restrict_time.begin(), restrict_time.end());
        trace.macro.push_back(rho);
        trace.micro_stats.push_back(stats);
        std::vector<std::optional<ParticleEnsemble>> snaps(N + 1);
        for (std::size_t n = 0; n <= N; ++n) {
            if (cfg.snapshots.wants(k, n)) {
                snaps[n] = u[n];
            }
            for (const auto& w : diag[n].warnings) {
                trace.warnings.push_back("k=" + std::to_string(k) + " n=" + std::to_string(n) + ": " + w);
            }
            diag[n] = {};
            for (std::size_t i = 0; i < rho[n].size(); ++i) {
                if (rho[n].regions[i].fraction != stats[n].regions[i].fraction) {
                    trace.fraction_diagnostics.push_back(
                        {k, n, i, rho[n].regions[i].fraction, stats[n].regions[i].fraction});
                }
            }
        }
        trace.snapshots.push_back(std::move(snaps));
    };

    auto match_all = [&](int k, const std::vector<ParticleEnsemble>& templates) {
        parallel_for(N, cfg.workers, [&](std::size_t m) {
            const std::size_t n = m + 1;
            detail::with_context(k, n, [&] {
                const auto start = std::chrono::steady_clock::now();
                u[n] = match(rho[n], templates[m], partition, &diag[n]);
                match_time[n] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
                return 0;
            });
        });
        trace.timing.matching.insert(trace.timing.matching.end(), match_time.begin() + 1, match_time.end());
    };

    // k = 0: lifting of the coarse prediction
    match_all(0, std::vector<ParticleEnsemble>(N, shape));
    record(0);

    std::vector<ParticleEnsemble> fine(N);
    std::vector<MacroState> fine_stats(N);
    std::vector<double> fine_time(N, 0.0);
    std::vector<double> base_time(N, 0.0);
    const bool from_restriction = cfg.correction == CorrectionBase::restriction;
    for (int k = 0; k < cfg.K; ++k) {
        parallel_for(N, cfg.workers, [&](std::size_t n) {
            detail::with_context(k, n, [&] {
                auto start = std::chrono::steady_clock::now();
                fine[n] = propagate_fine(model, u[n], n, cfg.slice_start(n), cfg.fine, cfg.noise, k);
                fine_time[n] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
                fine_stats[n] = restrict_moments(fine[n], partition);
                if (from_restriction) {
                    start = std::chrono::steady_clock::now();
                    coarse_prev[n] = integrate_macro(cfg.coarse, stats[n], cfg.slice_start(n),
                                                     cfg.slice_start(n + 1), cfg.integrator);
                    base_time[n] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
                }
                return 0;
            });
        });
        trace.timing.fine.insert(trace.timing.fine.end(), fine_time.begin(), fine_time.end());
        if (from_restriction) {
            trace.timing.coarse.insert(trace.timing.coarse.end(), base_time.begin(), base_time.end());
        }

        const std::vector<ParticleEnsemble> previous = cfg.stop_tolerance > 0.0 ? u : std::vector<ParticleEnsemble>{};
        rho[0] = rho0;
        for (std::size_t n = 0; n < N; ++n) {
            const MacroState next = detail::with_context(k + 1, n, [&] { return coarse_step(rho[n], n); });
            rho[n + 1] = corrected(next, fine_stats[n], coarse_prev[n]);
            coarse_prev[n] = next;
        }
        u[0] = initial;
        match_all(k + 1, fine);
        record(k + 1);

        if (cfg.stop_tolerance > 0.0) {
            double change = 0.0;
            for (std::size_t n = 1; n <= N; ++n) {
                change = std::max(change, wasserstein_1d(u[n], previous[n]));
            }
            if (change < cfg.stop_tolerance) {
                trace.stopped_early = k + 1 < cfg.K;
                break;
            }
        }
    }
    return trace;
}

inline PararealTrace run_micro_macro(const PararealConfig& cfg, const McKeanVlasovModel& model,
                                     const InitialDistribution& init) {
    return run_micro_macro(cfg, model, sample_initial(init, cfg.P, cfg.noise.master_seed));
}

/// Classical Parareal on a scalar state; iterates[k][n], k = 0..K, n = 0..N.
struct ClassicalTrace {
    std::vector<std::vector<double>> iterates;
    std::vector<double> fine_solution;
};

/// u_{n+1}^{k+1} = C_n(u_n^{k+1}) + F_n(u_n^k) - C_n(u_n^k), with callables
/// coarse(n, u) and fine(n, u) advancing slice n.
template <typename Coarse, typename Fine>
ClassicalTrace run_classical(std::size_t N, int K, double u0, Coarse&& coarse, Fine&& fine) {
    ClassicalTrace tr;
    std::vector<double> u(N + 1);
    u[0] = u0;
    for (std::size_t n = 0; n < N; ++n) {
        u[n + 1] = coarse(n, u[n]);
    }
    tr.iterates.push_back(u);
    for (int k = 0; k < K; ++k) {
        const std::vector<double>& prev = tr.iterates.back();
        std::vector<double> f(N);
        std::vector<double> c_old(N);
        for (std::size_t n = 0; n < N; ++n) {
            f[n] = fine(n, prev[n]);
            c_old[n] = coarse(n, prev[n]);
        }
        std::vector<double> next(N + 1);
        next[0] = u0;
        for (std::size_t n = 0; n < N; ++n) {
            next[n + 1] = (coarse(n, next[n]) - c_old[n]) + f[n];
        }
        tr.iterates.push_back(std::move(next));
    }
    tr.fine_solution.assign(N + 1, 0.0);
    tr.fine_solution[0] = u0;
    for (std::size_t n = 0; n < N; ++n) {
        tr.fine_solution[n + 1] = fine(n, tr.fine_solution[n]);
    }
    return tr;
}

} // namespace mcparareal

#endif
