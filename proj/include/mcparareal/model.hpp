#ifndef MCPARAREAL_MODEL_HPP
#define MCPARAREAL_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mcparareal {

/// How the mean-field statistic of an ensemble is formed.
enum class StatisticKind {
    mean_of_f,     ///< E[f(X)], evaluated once per step
    empirical_cdf, ///< CDF evaluated at each particle (rank based)
    rotator_sum,   ///< (1/P) sum sin(X), (1/P) sum cos(X)
};

/// Mean-field statistic as seen by one particle. Only the members relevant to
/// the model's StatisticKind are meaningful.
struct FieldValue {
    double mean_f = 0.0;
    double sin_mean = 0.0;
    double cos_mean = 0.0;
    double cdf = 0.0;
};

using Coefficient = std::function<double(double x, const FieldValue& s, double t)>;
using ScalarFunction = std::function<double(double)>;

struct RotatorParameters {
    double coupling = 1.0;
    double sigma_squared = 1.0;
};

/// Scalar McKean-Vlasov SDE dX = a(X, s, t) dt + b(X, s, t) dW together with the
/// X-derivatives the moment closures need. Immutable once built; share freely.
struct McKeanVlasovModel {
    std::string name;
    Coefficient drift;
    Coefficient diffusion;
    Coefficient drift_dx;
    Coefficient diffusion_dx;
    Coefficient diffusion_dxx;
    StatisticKind statistic = StatisticKind::mean_of_f;
    ScalarFunction f = [](double x) { return x; };
    ScalarFunction f_dd = [](double) { return 0.0; };
    /// Applied to every particle after each Euler-Maruyama step when set.
    ScalarFunction post_step;
    /// Set for the plane rotator; selects its dedicated Taylor-enriched closure.
    std::optional<RotatorParameters> rotator;

    /// Field value of a point mass at `mean` (first-order moment closure).
    FieldValue closure_at(double mean) const {
        FieldValue s;
        switch (statistic) {
        case StatisticKind::mean_of_f:
            s.mean_f = f(mean);
            break;
        case StatisticKind::rotator_sum:
            s.sin_mean = std::sin(mean);
            s.cos_mean = std::cos(mean);
            break;
        case StatisticKind::empirical_cdf:
            // Gaussian closure: half the mass lies below the mean.
            s.cdf = 0.5;
            break;
        }
        return s;
    }
};

/// p_0: a point mass, a normal law, or a user sampler mapping a standard normal
/// draw (and particle index) to a position.
struct InitialDistribution {
    enum class Kind { dirac, normal, custom };
    Kind kind = Kind::dirac;
    double mean = 0.0;
    double variance = 0.0;
    std::function<double(double standard_normal, std::size_t index)> sampler;

    static InitialDistribution dirac(double x0) { return {Kind::dirac, x0, 0.0, {}}; }
    static InitialDistribution normal(double mean, double variance) {
        if (!(variance >= 0.0)) {
            throw std::invalid_argument("initial variance must be non-negative");
        }
        return {Kind::normal, mean, variance, {}};
    }
    static InitialDistribution custom(std::function<double(double, std::size_t)> sampler) {
        return {Kind::custom, 0.0, 0.0, std::move(sampler)};
    }
};

struct PerturbedOUSpec {
    double a = -1.0;
    double a_E = -0.5;
    double B = 0.01;
    double eps_M = 0.0;
    double eps_V = 0.0;
};

struct PlaneRotatorSpec {
    double K = 1.0;
    double kBT = 0.5;
    bool wrap = true;
};

struct BurgersSpec {
    double sigma = 0.4472135954999579; // sqrt(0.2)
};

struct DoubleWellSpec {
    double alpha = 0.25;
    double gamma = 0.5;
    double beta = 0.3;
    double J = 0.0;
    double sigma = 1.0;
    double m0 = 1.2;

    /// Constant tilt J*sqrt(alpha / (2 gamma)).
    double tilt() const { return J * std::sqrt(alpha / (2.0 * gamma)); }
    /// V(x) = alpha x^4 - gamma x^2 + tilt x.
    double potential(double x) const { return alpha * x * x * x * x - gamma * x * x + tilt() * x; }
    double potential_dx(double x) const { return 4.0 * alpha * x * x * x - 2.0 * gamma * x + tilt(); }

    /// Critical points of V in increasing order: one minimum, or (min, max, min).
    std::vector<double> critical_points() const {
        // 4 alpha x^3 - 2 gamma x + tilt = 0  <=>  x^3 + p x + q = 0
        const double p = -2.0 * gamma / (4.0 * alpha);
        const double q = tilt() / (4.0 * alpha);
        const double disc = -(4.0 * p * p * p + 27.0 * q * q);
        if (disc > 0.0) {
            const double r = 2.0 * std::sqrt(-p / 3.0);
            const double phi = std::acos(3.0 * q / (p * r));
            std::vector<double> roots;
            for (int m = 0; m < 3; ++m) {
                roots.push_back(r * std::cos(phi / 3.0 - 2.0 * std::numbers::pi * m / 3.0));
            }
            std::sort(roots.begin(), roots.end());
            return roots;
        }
        // single real root (Cardano)
        const double s = std::sqrt(q * q / 4.0 + p * p * p / 27.0);
        return {std::cbrt(-q / 2.0 + s) + std::cbrt(-q / 2.0 - s)};
    }
};

/// Time-dependent coefficients of the linear model
/// dX = (A X + A_E E[X] + A_0) dt + (B X + B_E E[X] + B_0) dW.
struct LinearMcKVSpec {
    ScalarFunction A = [](double) { return 0.0; };
    ScalarFunction A_E = [](double) { return 0.0; };
    ScalarFunction A_0 = [](double) { return 0.0; };
    ScalarFunction B = [](double) { return 0.0; };
    ScalarFunction B_E = [](double) { return 0.0; };
    ScalarFunction B_0 = [](double) { return 0.0; };

    static LinearMcKVSpec constant(double A, double A_E, double A_0, double B, double B_E, double B_0) {
        auto c = [](double v) { return ScalarFunction([v](double) { return v; }); };
        return {c(A), c(A_E), c(A_0), c(B), c(B_E), c(B_0)};
    }
};

namespace detail {
inline Coefficient zero_coefficient() {
    return [](double, const FieldValue&, double) { return 0.0; };
}
inline Coefficient constant_coefficient(double v) {
    return [v](double, const FieldValue&, double) { return v; };
}
} // namespace detail

inline McKeanVlasovModel make_perturbed_ou(const PerturbedOUSpec& spec) {
    McKeanVlasovModel m;
    m.name = "perturbed-ou";
    const double a = spec.a;
    const double a_E = spec.a_E;
    m.drift = [a, a_E](double x, const FieldValue& s, double) { return a * x + a_E * s.mean_f; };
    m.drift_dx = detail::constant_coefficient(a);
    m.diffusion = detail::constant_coefficient(spec.B);
    m.diffusion_dx = detail::zero_coefficient();
    m.diffusion_dxx = detail::zero_coefficient();
    m.statistic = StatisticKind::mean_of_f;
    return m;
}

inline McKeanVlasovModel make_plane_rotator(const PlaneRotatorSpec& spec) {
    McKeanVlasovModel m;
    m.name = "plane-rotator";
    const double K = spec.K;
    // K/P sum_q sin(x_q - x) = K (cos(x) S - sin(x) C)
    m.drift = [K](double x, const FieldValue& s, double) {
        return K * (std::cos(x) * s.sin_mean - std::sin(x) * s.cos_mean) - std::sin(x);
    };
    m.drift_dx = [K](double x, const FieldValue& s, double) {
        return K * (-std::sin(x) * s.sin_mean - std::cos(x) * s.cos_mean) - std::cos(x);
    };
    if (!(spec.kBT >= 0.0)) {
        throw std::invalid_argument("plane rotator temperature must be non-negative");
    }
    m.diffusion = detail::constant_coefficient(std::sqrt(2.0 * spec.kBT));
    m.diffusion_dx = detail::zero_coefficient();
    m.diffusion_dxx = detail::zero_coefficient();
    m.statistic = StatisticKind::rotator_sum;
    m.f = [](double x) { return std::sin(x); };
    m.f_dd = [](double x) { return -std::sin(x); };
    if (spec.wrap) {
        m.post_step = [](double x) {
            constexpr double two_pi = 2.0 * std::numbers::pi;
            const double r = std::fmod(x, two_pi);
            return r < 0.0 ? r + two_pi : r;
        };
    }
    m.rotator = RotatorParameters{K, 2.0 * spec.kBT};
    return m;
}

inline McKeanVlasovModel make_burgers(const BurgersSpec& spec) {
    if (!(spec.sigma > 0.0)) {
        throw std::invalid_argument("Burgers diffusion must be positive");
    }
    McKeanVlasovModel m;
    m.name = "burgers";
    m.drift = [](double, const FieldValue& s, double) { return 1.0 - s.cdf; };
    m.drift_dx = detail::zero_coefficient();
    m.diffusion = detail::constant_coefficient(spec.sigma);
    m.diffusion_dx = detail::zero_coefficient();
    m.diffusion_dxx = detail::zero_coefficient();
    m.statistic = StatisticKind::empirical_cdf;
    return m;
}

inline McKeanVlasovModel make_double_well(const DoubleWellSpec& spec) {
    if (!(spec.alpha > 0.0)) {
        throw std::invalid_argument("double-well alpha must be positive");
    }
    McKeanVlasovModel m;
    m.name = "double-well";
    const double alpha = spec.alpha;
    const double gamma = spec.gamma;
    const double beta = spec.beta;
    const double tilt = spec.tilt();
    m.drift = [=](double x, const FieldValue& s, double) {
        return -(4.0 * alpha * x * x * x - 2.0 * gamma * x - beta * s.mean_f + tilt);
    };
    m.drift_dx = [=](double x, const FieldValue&, double) { return -(12.0 * alpha * x * x - 2.0 * gamma); };
    m.diffusion = detail::constant_coefficient(spec.sigma);
    m.diffusion_dx = detail::zero_coefficient();
    m.diffusion_dxx = detail::zero_coefficient();
    m.statistic = StatisticKind::mean_of_f;
    return m;
}

inline McKeanVlasovModel make_linear(const LinearMcKVSpec& spec) {
    McKeanVlasovModel m;
    m.name = "linear";
    m.drift = [A = spec.A, AE = spec.A_E, A0 = spec.A_0](double x, const FieldValue& s, double t) {
        return A(t) * x + AE(t) * s.mean_f + A0(t);
    };
    m.drift_dx = [A = spec.A](double, const FieldValue&, double t) { return A(t); };
    m.diffusion = [B = spec.B, BE = spec.B_E, B0 = spec.B_0](double x, const FieldValue& s, double t) {
        return B(t) * x + BE(t) * s.mean_f + B0(t);
    };
    m.diffusion_dx = [B = spec.B](double, const FieldValue&, double t) { return B(t); };
    m.diffusion_dxx = detail::zero_coefficient();
    m.statistic = StatisticKind::mean_of_f;
    return m;
}

} // namespace mcparareal

#endif
