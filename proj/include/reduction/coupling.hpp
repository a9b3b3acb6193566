#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace reduction {

enum class CouplingKind { constant, power_law, exponential_decay, finite_time, tabulated };

const char* to_string(CouplingKind kind);

/// A positive coupling function sigma_t together with its cumulative integrals.
///
/// Parametrizations (sigma denotes the scale parameter):
///   constant           sigma_t = sigma
///   power_law          sigma_t = sigma * sqrt(alpha) * t^((alpha-1)/2), so int_0^t sigma^2 = sigma^2 t^alpha
///   exponential_decay  sigma_t = sigma * exp(-lambda t)
///   finite_time        sigma_t = sigma T / (T - t), defined on [0, T)
///   tabulated          piecewise-linear through (t_k, sigma_k), t_0 = 0, held constant past the last node
///
/// The analytic kinds integrate in closed form. The tabulated kind uses adaptive
/// Simpson quadrature per table segment to relative tolerance 1e-10.
class CouplingSchedule {
public:
    static CouplingSchedule constant(double sigma);
    static CouplingSchedule power_law(double sigma, double alpha);
    static CouplingSchedule exponential_decay(double sigma, double lambda);
    static CouplingSchedule finite_time(double sigma, double horizon);
    static CouplingSchedule tabulated(std::vector<std::pair<double, double>> table);

    CouplingKind kind() const noexcept { return kind_; }
    double scale() const noexcept { return sigma_; }
    double alpha() const noexcept { return alpha_; }
    double decay_rate() const noexcept { return lambda_; }
    /// Finite horizon T for the finite_time kind.
    std::optional<double> horizon() const;
    const std::vector<std::pair<double, double>>& table() const noexcept { return table_; }

    /// True when t lies in the domain: t >= 0, and t < T for finite_time.
    bool in_domain(double t) const;

    double sigma(double t) const;
    /// int_a^b sigma_s ds. b may be +infinity where the integral is finite.
    double int_sigma(double a, double b) const;
    /// int_a^b sigma_s^2 ds.
    double int_sigma_sq(double a, double b) const;
    /// int_a^b sigma_s^{-2} ds.
    double int_inv_sigma_sq(double a, double b) const;

    /// int_0^infinity sigma^2 (infinite for complete regimes, including finite_time).
    double total_sigma_sq() const;

private:
    CouplingSchedule(CouplingKind kind, double sigma, double alpha, double lambda, double horizon);

    double clamp(double t) const;
    void check_interval(double a, double b) const;
    double table_sigma(double t) const;
    template <typename F>
    double table_integral(double a, double b, F&& f) const;

    CouplingKind kind_;
    double sigma_ = 0.0;
    double alpha_ = 0.0;
    double lambda_ = 0.0;
    double horizon_ = 0.0;
    std::vector<std::pair<double, double>> table_;
};

enum class RegimeTag { complete_infinite_horizon, partial, finite_time };

const char* to_string(RegimeTag tag);

struct CollapseRegime {
    RegimeTag tag;
    std::optional<double> horizon;
};

CollapseRegime classify(const CouplingSchedule& schedule);

/// Adaptive Simpson quadrature of f over [a, b] to relative tolerance rel_tol.
template <typename F>
double adaptive_simpson(F&& f, double a, double b, double rel_tol, int max_depth = 48);

}  // namespace reduction

#include "reduction/detail/quadrature.hpp"
