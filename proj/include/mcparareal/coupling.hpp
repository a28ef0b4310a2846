#ifndef MCPARAREAL_COUPLING_HPP
#define MCPARAREAL_COUPLING_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "errors.hpp"
#include "macro_state.hpp"
#include "particles.hpp"

namespace mcparareal {

/// Non-fatal events recorded while matching.
struct MatchDiagnostics {
    std::vector<std::string> warnings;
    std::size_t clamped_variances = 0;
    std::size_t skipped_regions = 0;
};

/// R: per-region population moments and particle fractions.
inline MacroState restrict_moments(const ParticleEnsemble& ens, const RegionPartition& partition) {
    return region_statistics(ens, partition);
}

/// M: affine per-region transform imposing the target mean and variance.
/// Membership is fixed by the pre-transform positions; fractions are not imposed.
inline ParticleEnsemble match(const MacroState& target, const ParticleEnsemble& ens, const RegionPartition& partition,
                              MatchDiagnostics* diagnostics = nullptr) {
    const std::size_t I = partition.region_count();
    if (target.size() != I) {
        throw std::invalid_argument("target macro state does not match the partition");
    }
    const MacroState current = region_statistics(ens, partition);

    std::vector<double> scale(I, 1.0);
    std::vector<double> shift_from(I, 0.0);
    std::vector<double> shift_to(I, 0.0);
    std::vector<bool> identity(I, false);
    for (std::size_t i = 0; i < I; ++i) {
        const auto& cur = current.regions[i];
        const auto& tgt = target.regions[i];
        if (cur.count == 0) {
            identity[i] = true;
            if (diagnostics) {
                diagnostics->skipped_regions++;
                diagnostics->warnings.push_back("region " + std::to_string(i) + " has no particles; skipped");
            }
            continue;
        }
        double var = tgt.variance;
        if (var < 0.0) {
            if (diagnostics) {
                diagnostics->clamped_variances++;
                diagnostics->warnings.push_back("negative target variance in region " + std::to_string(i) +
                                                " clamped to 0");
            }
            var = 0.0;
        }
        if (var == cur.variance && tgt.mean == cur.mean) {
            identity[i] = true;
            continue;
        }
        if (cur.variance == 0.0) {
            // A point mass can only be shifted. Targets at rounding level of the
            // mean are treated as zero.
            const double tiny = 64.0 * std::numeric_limits<double>::epsilon() *
                                std::max({1.0, std::abs(tgt.mean), std::abs(cur.mean)});
            if (var > tiny * tiny) {
                throw DegenerateMatch("cannot impose positive variance on a point-mass region " +
                                      std::to_string(i));
            }
            scale[i] = 0.0;
        } else {
            scale[i] = std::sqrt(var / cur.variance);
        }
        shift_from[i] = cur.mean;
        shift_to[i] = tgt.mean;
    }

    ParticleEnsemble out = ens;
    for (double& x : out.positions) {
        const std::size_t i = partition.region_of(x);
        if (!identity[i]) {
            x = scale[i] * (x - shift_from[i]) + shift_to[i];
        }
    }
    return out;
}

/// L(rho) = M(rho, template): the shape of `initial` carries the target moments.
inline ParticleEnsemble lift(const MacroState& target, const ParticleEnsemble& initial,
                             const RegionPartition& partition, MatchDiagnostics* diagnostics = nullptr) {
    return match(target, initial, partition, diagnostics);
}

/// Replaces point-mass regions of `initial` by a standardized normal shape so that
/// lifting can impose a positive variance. Non-degenerate regions are untouched;
/// replacement draws stay strictly inside their region.
inline ParticleEnsemble lifting_template(const ParticleEnsemble& initial, const RegionPartition& partition,
                                         std::uint64_t seed) {
    const MacroState stats = region_statistics(initial, partition);
    bool any = false;
    for (const auto& r : stats.regions) {
        any = any || (r.count > 0 && r.variance == 0.0);
    }
    if (!any) {
        return initial;
    }
    ParticleEnsemble out = initial;
    const NormalSource normals(seed);
    for (std::size_t p = 0; p < out.size(); ++p) {
        const double x = initial.positions[p];
        const std::size_t i = partition.region_of(x);
        const auto& r = stats.regions[i];
        if (!(r.count > 0 && r.variance == 0.0)) {
            continue;
        }
        double width = 1.0;
        const double room = std::min(r.mean - partition.lower(i), partition.upper(i) - r.mean);
        if (std::isfinite(room)) {
            width = room / 16.0;
        }
        const double z = std::clamp(normals.normal(Stream::lifting_template, 0, 0, static_cast<std::uint32_t>(p), 0),
                                    -8.0, 8.0);
        out.positions[p] = r.mean + width * z;
    }
    return out;
}

} // namespace mcparareal

#endif
