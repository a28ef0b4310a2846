#ifndef MCPARAREAL_MACRO_STATE_HPP
#define MCPARAREAL_MACRO_STATE_HPP

#include <algorithm>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "errors.hpp"

namespace mcparareal {

/// Ordered separatrices splitting the real line into I = separatrices + 1
/// half-open regions [s_{i-1}, s_i). `peaks` optionally holds one mode location
/// per region.
struct RegionPartition {
    std::vector<double> separatrices;
    std::vector<double> peaks;

    static RegionPartition single() { return {}; }

    std::size_t region_count() const { return separatrices.size() + 1; }

    std::size_t region_of(double x) const {
        return static_cast<std::size_t>(
            std::upper_bound(separatrices.begin(), separatrices.end(), x) - separatrices.begin());
    }

    double lower(std::size_t i) const {
        return i == 0 ? -std::numeric_limits<double>::infinity() : separatrices[i - 1];
    }
    double upper(std::size_t i) const {
        return i == separatrices.size() ? std::numeric_limits<double>::infinity() : separatrices[i];
    }

    /// Representative point used as the mean of an empty region.
    double representative(std::size_t i) const {
        if (i < peaks.size()) {
            return peaks[i];
        }
        if (separatrices.empty()) {
            return 0.0;
        }
        if (i == 0) {
            return separatrices.front();
        }
        if (i == separatrices.size()) {
            return separatrices.back();
        }
        return 0.5 * (separatrices[i - 1] + separatrices[i]);
    }

    /// Throws InvalidPartition unless separatrices increase strictly and every
    /// peak lies inside its region.
    void validate() const {
        for (std::size_t i = 1; i < separatrices.size(); ++i) {
            if (!(separatrices[i] > separatrices[i - 1])) {
                throw InvalidPartition("separatrices must be strictly increasing");
            }
        }
        if (!peaks.empty()) {
            if (peaks.size() != region_count()) {
                throw InvalidPartition("need exactly one peak per region");
            }
            for (std::size_t i = 0; i < peaks.size(); ++i) {
                if (region_of(peaks[i]) != i) {
                    throw InvalidPartition("peak does not lie inside its region");
                }
            }
        }
    }
};

struct RegionMoments {
    double mean = 0.0;
    double variance = 0.0;
    double fraction = 1.0;
    /// Fewer than two member particles; variance forced to 0.
    bool degenerate = false;
    std::size_t count = 0;
};

/// Per-region means, variances and particle fractions.
struct MacroState {
    std::vector<RegionMoments> regions;

    std::size_t size() const { return regions.size(); }

    /// Mixture mean sum_i alpha_i M_i.
    double mixture_mean() const {
        double m = 0.0;
        for (const auto& r : regions) {
            m += r.fraction * r.mean;
        }
        return m;
    }

    /// Law-of-total-variance combination of the region moments.
    double mixture_variance() const {
        const double m = mixture_mean();
        double v = 0.0;
        for (const auto& r : regions) {
            v += r.fraction * (r.variance + (r.mean - m) * (r.mean - m));
        }
        return v;
    }

    double fraction_sum() const {
        double s = 0.0;
        for (const auto& r : regions) {
            s += r.fraction;
        }
        return s;
    }

    /// Packed as [M_1, Sigma_1, alpha_1, ..., M_I, Sigma_I, alpha_I].
    std::vector<double> pack() const {
        std::vector<double> y;
        y.reserve(3 * regions.size());
        for (const auto& r : regions) {
            y.push_back(r.mean);
            y.push_back(r.variance);
            y.push_back(r.fraction);
        }
        return y;
    }

    static MacroState unpack(std::span<const double> y) {
        MacroState s;
        s.regions.resize(y.size() / 3);
        for (std::size_t i = 0; i < s.regions.size(); ++i) {
            s.regions[i].mean = y[3 * i];
            s.regions[i].variance = y[3 * i + 1];
            s.regions[i].fraction = y[3 * i + 2];
        }
        return s;
    }

    static MacroState unimodal(double mean, double variance) {
        MacroState s;
        s.regions.push_back({mean, variance, 1.0, false, 0});
        return s;
    }
};

/// Componentwise (a - c) + b on means, variances and fractions (Parareal correction).
/// Evaluated in this order so that a == c yields b bitwise.
inline MacroState corrected(const MacroState& a, const MacroState& b, const MacroState& c) {
    MacroState out;
    out.regions.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out.regions[i].mean = (a.regions[i].mean - c.regions[i].mean) + b.regions[i].mean;
        out.regions[i].variance = (a.regions[i].variance - c.regions[i].variance) + b.regions[i].variance;
        out.regions[i].fraction = (a.regions[i].fraction - c.regions[i].fraction) + b.regions[i].fraction;
        out.regions[i].count = b.regions[i].count;
    }
    return out;
}

} // namespace mcparareal

#endif
