#ifndef MCPARAREAL_INTEGRATOR_HPP
#define MCPARAREAL_INTEGRATOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "errors.hpp"

namespace mcparareal {

using OdeRhs = std::function<void(double t, std::span<const double> y, std::span<double> dydt)>;

struct IntegratorConfig {
    double rel_tol = 1e-8;
    double abs_tol = 1e-10;
    /// 0 selects the starting step automatically.
    double initial_step = 0.0;
    double max_step = std::numeric_limits<double>::infinity();
    std::size_t max_steps = 100000;

    void validate() const {
        if (!(rel_tol > 0.0) || !(abs_tol > 0.0)) {
            throw std::invalid_argument("integrator tolerances must be positive");
        }
        if (!(max_step > 0.0) || initial_step < 0.0) {
            throw std::invalid_argument("invalid integrator step bounds");
        }
    }
};

struct IntegrationStats {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t evaluations = 0;
};

/// Dormand-Prince 5(4) embedded pair, FSAL, with a proportional-integral step
/// controller on the mixed error scale atol + rtol * |y|.
class DormandPrince54 {
public:
    explicit DormandPrince54(OdeRhs rhs) : rhs_(std::move(rhs)) {}

    std::vector<double> integrate(std::vector<double> y, double t0, double t1, const IntegratorConfig& cfg,
                                  IntegrationStats* stats = nullptr) const {
        cfg.validate();
        if (!(t1 > t0)) {
            throw std::invalid_argument("integration interval must satisfy t1 > t0");
        }
        const std::size_t n = y.size();
        Work w(n);
        IntegrationStats local;
        IntegrationStats& st = stats ? *stats : local;

        eval(t0, y, w.k1, st);
        double h = cfg.initial_step > 0.0 ? cfg.initial_step : initial_step(y, w.k1, t0, t1, cfg);
        h = std::min({h, cfg.max_step, t1 - t0});
        double t = t0;
        double err_old = 1e-4;
        std::size_t steps = 0;

        while (t < t1) {
            if (steps++ >= cfg.max_steps) {
                throw IntegrationFailure("maximum number of integrator steps exceeded");
            }
            bool last = false;
            if (t + h >= t1 || t + 1.01 * h >= t1) {
                h = t1 - t;
                last = true;
            }
            step(t, h, y, w, st);
            double err = error_norm(y, w.y_new, w.err, cfg);
            if (!std::isfinite(err)) {
                err = 1e10;
            }
            if (err <= 1.0) {
                for (double v : w.y_new) {
                    if (!std::isfinite(v)) {
                        throw NumericalBlowup("moment ODE state became non-finite");
                    }
                }
                st.accepted++;
                t = last ? t1 : t + h;
                y.swap(w.y_new);
                w.k1.swap(w.k7); // FSAL
                // PI control: beta = 0.04, alpha = 0.2 - 0.75 beta
                double fac = std::pow(err, 0.17) * std::pow(err_old, -0.04) / kSafety;
                fac = std::clamp(fac, 1.0 / 10.0, 1.0 / 0.2);
                err_old = std::max(err, 1e-4);
                h = std::min(h / fac, cfg.max_step);
            } else {
                st.rejected++;
                const double fac = std::min(1.0 / 0.2, std::pow(err, 0.2) / kSafety);
                h /= fac;
                if (h < 1e-14 * std::max(1.0, std::abs(t))) {
                    throw IntegrationFailure("integrator step size underflow");
                }
            }
        }
        return y;
    }

    /// Fixed-step fifth-order solution; used for order verification.
    std::vector<double> integrate_fixed(std::vector<double> y, double t0, double t1, std::size_t steps) const {
        const double h = (t1 - t0) / static_cast<double>(steps);
        Work w(y.size());
        IntegrationStats st;
        for (std::size_t s = 0; s < steps; ++s) {
            const double t = t0 + static_cast<double>(s) * h;
            eval(t, y, w.k1, st);
            step(t, h, y, w, st);
            y.swap(w.y_new);
        }
        return y;
    }

private:
    struct Work {
        explicit Work(std::size_t n)
            : k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), y_new(n), err(n) {}
        std::vector<double> k1, k2, k3, k4, k5, k6, k7, tmp, y_new, err;
    };

    static constexpr double kSafety = 0.9;

    static constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
    static constexpr double a21 = 1.0 / 5.0;
    static constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
    static constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
    static constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                            a54 = -212.0 / 729.0;
    static constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                            a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
    static constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0, b5 = -2187.0 / 6784.0,
                            b6 = 11.0 / 84.0;
    // b - b_hat (fifth minus embedded fourth order weights)
    static constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                            e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

    void eval(double t, std::span<const double> y, std::span<double> dy, IntegrationStats& st) const {
        st.evaluations++;
        rhs_(t, y, dy);
    }

    // Requires w.k1 = f(t, y). Fills w.y_new, w.err and w.k7 = f(t + h, y_new).
    void step(double t, double h, const std::vector<double>& y, Work& w, IntegrationStats& st) const {
        const std::size_t n = y.size();
        for (std::size_t i = 0; i < n; ++i) w.tmp[i] = y[i] + h * a21 * w.k1[i];
        eval(t + c2 * h, w.tmp, w.k2, st);
        for (std::size_t i = 0; i < n; ++i) w.tmp[i] = y[i] + h * (a31 * w.k1[i] + a32 * w.k2[i]);
        eval(t + c3 * h, w.tmp, w.k3, st);
        for (std::size_t i = 0; i < n; ++i) w.tmp[i] = y[i] + h * (a41 * w.k1[i] + a42 * w.k2[i] + a43 * w.k3[i]);
        eval(t + c4 * h, w.tmp, w.k4, st);
        for (std::size_t i = 0; i < n; ++i)
            w.tmp[i] = y[i] + h * (a51 * w.k1[i] + a52 * w.k2[i] + a53 * w.k3[i] + a54 * w.k4[i]);
        eval(t + c5 * h, w.tmp, w.k5, st);
        for (std::size_t i = 0; i < n; ++i)
            w.tmp[i] = y[i] + h * (a61 * w.k1[i] + a62 * w.k2[i] + a63 * w.k3[i] + a64 * w.k4[i] + a65 * w.k5[i]);
        eval(t + h, w.tmp, w.k6, st);
        for (std::size_t i = 0; i < n; ++i)
            w.y_new[i] = y[i] + h * (b1 * w.k1[i] + b3 * w.k3[i] + b4 * w.k4[i] + b5 * w.k5[i] + b6 * w.k6[i]);
        eval(t + h, w.y_new, w.k7, st);
        for (std::size_t i = 0; i < n; ++i)
            w.err[i] = h * (e1 * w.k1[i] + e3 * w.k3[i] + e4 * w.k4[i] + e5 * w.k5[i] + e6 * w.k6[i] +
                            e7 * w.k7[i]);
    }

    static double error_norm(const std::vector<double>& y0, const std::vector<double>& y1,
                             const std::vector<double>& err, const IntegratorConfig& cfg) {
        double acc = 0.0;
        for (std::size_t i = 0; i < y0.size(); ++i) {
            const double sc = cfg.abs_tol + cfg.rel_tol * std::max(std::abs(y0[i]), std::abs(y1[i]));
            acc += (err[i] / sc) * (err[i] / sc);
        }
        return y0.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(y0.size()));
    }

    // Hairer-Wanner starting step estimate without the second-derivative probe.
    static double initial_step(const std::vector<double>& y, const std::vector<double>& f0, double t0, double t1,
                               const IntegratorConfig& cfg) {
        double d0 = 0.0;
        double d1 = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double sc = cfg.abs_tol + cfg.rel_tol * std::abs(y[i]);
            d0 += (y[i] / sc) * (y[i] / sc);
            d1 += (f0[i] / sc) * (f0[i] / sc);
        }
        const double n = static_cast<double>(std::max<std::size_t>(1, y.size()));
        d0 = std::sqrt(d0 / n);
        d1 = std::sqrt(d1 / n);
        double h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        if (d1 > 1e-15) {
            h = std::min(h, std::pow(0.01 / d1, 0.2));
        }
        return std::clamp(h, 1e-12 * std::max(1.0, std::abs(t0)), t1 - t0);
    }

    OdeRhs rhs_;
};

} // namespace mcparareal

#endif
