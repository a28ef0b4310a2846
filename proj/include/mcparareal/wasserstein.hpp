#ifndef MCPARAREAL_WASSERSTEIN_HPP
#define MCPARAREAL_WASSERSTEIN_HPP

#include <algorithm>
#include <cmath>
#include <ranges>
#include <span>
#include <vector>

#include "errors.hpp"
#include "particles.hpp"

namespace mcparareal {

/// W_1 between two equal-size empirical measures on the line:
/// (1/P) sum_i |x_(i) - y_(i)| over order statistics.
inline double wasserstein_1d(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw UnsupportedComparison("Wasserstein distance requires ensembles of equal size");
    }
    if (x.empty()) {
        throw UnsupportedComparison("Wasserstein distance of empty ensembles");
    }
    std::vector<double> xs(x.begin(), x.end());
    std::vector<double> ys(y.begin(), y.end());
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    return detail::compensated_sum(std::views::iota(std::size_t{0}, xs.size()),
                                   [&](std::size_t i) { return std::abs(xs[i] - ys[i]); }) /
           static_cast<double>(xs.size());
}

inline double wasserstein_1d(const ParticleEnsemble& x, const ParticleEnsemble& y) {
    return wasserstein_1d(std::span<const double>(x.positions), std::span<const double>(y.positions));
}

} // namespace mcparareal

#endif
