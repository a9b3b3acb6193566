#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reduction/coupling.hpp"
#include "reduction/exact_solver.hpp"
#include "reduction/spectrum.hpp"

namespace reduction {

/// Standard normal distribution function.
double normal_cdf(double x);

/// P(M_t > eps) for M_t = exp(omega/2 int sigma dB - omega^2 I / 4), I = int_0^t sigma^2.
/// Throws ReductionError(degenerate_gap) for omega = 0.
double collapse_tail_probability(double omega, double eps, double int_sigma_sq);
double collapse_tail_probability(double omega, double eps, const CouplingSchedule& schedule, double t);

/// Monte Carlo estimate of P(M_t > eps) from exactly sampled int_0^t sigma dB.
double collapse_tail_monte_carlo(double omega, double eps, const CouplingSchedule& schedule, double t,
                                 std::size_t samples, std::uint64_t master_seed);

/// Bound (-1 + sqrt(1 + 4 V0 I)) / (2I) on E[V_t], evaluated as 2 V0 / (1 + sqrt(1 + 4 V0 I)).
double variance_upper_bound(double v0, double int_sigma_sq);
double variance_upper_bound(double v0, const CouplingSchedule& schedule, double t);

/// max(0, V0 - V_max^2 I_inf). The schedule overload throws ReductionError(regime)
/// unless the schedule is classified partial.
double variance_lower_bound(double v0, double v_max, double total_int_sigma_sq);
double variance_lower_bound(double v0, double v_max, const CouplingSchedule& schedule);

/// (E_N - E_1)^2 / 4, the largest energy variance over all states.
double max_energy_variance(const Spectrum& spectrum);

/// Sum by recursive halving; the result depends only on the order of the input.
double pairwise_sum(std::span<const double> values);

struct EnsembleOptions {
    std::size_t path_count = 10000;
    std::uint64_t master_seed = 0;
    unsigned threads = 0;  ///< 0 means hardware concurrency
    /// Grid indices at which H_t and V_t are reported; empty selects default_checkpoints(grid, 10).
    std::vector<std::size_t> checkpoints;
};

struct CheckpointStats {
    double t = 0.0;
    double mean_H = 0.0;
    double stderr_H = 0.0;
    double mean_V = 0.0;
    double stderr_V = 0.0;
    double upper_bound = 0.0;
};

struct Flag {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct EnsembleReport {
    std::size_t path_count = 0;
    RegimeTag regime = RegimeTag::complete_infinite_horizon;
    double H0 = 0.0;
    double V0 = 0.0;
    double V_max = 0.0;
    std::vector<double> born_frequencies;  ///< terminal argmax frequencies
    std::vector<double> born_stderr;       ///< sqrt(pi_i (1 - pi_i) / paths)
    std::vector<CheckpointStats> curve;
    double terminal_mean_V = 0.0;
    double terminal_stderr_V = 0.0;
    std::optional<double> lower_bound;  ///< partial regime only
    std::vector<Flag> flags;

    bool all_passed() const;
};

/// Up to `count` distinct grid indices spaced evenly in index, excluding 0 and including the last.
std::vector<std::size_t> default_checkpoints(const TimeGrid& grid, std::size_t count);

/// Runs exact paths concurrently and checks Born frequencies (complete and finite-time regimes),
/// the martingale property of H_t, monotone mean V_t, the variance upper bound, and in the
/// partial regime the lower bound and strict positivity of the terminal mean V. Thresholds are
/// three standard errors. Results do not depend on the thread count.
EnsembleReport ensemble_report(const Spectrum& spectrum, const CouplingSchedule& schedule, const TimeGrid& grid,
                               const EnsembleOptions& options);

/// Finite-time transform of a sampled path.
struct BridgePaths {
    TimeGrid grid;
    std::vector<double> kernel_integral;   ///< int_0^t (T - s)^{-1} d xi_s
    std::vector<double> xi_star;           ///< (T - t) kernel_integral
    std::vector<double> beta;              ///< xi_star - sigma t H
    std::vector<double> beta_from_B;       ///< (T - t) int_0^t (T - s)^{-1} dB_s
    std::vector<double> xi_reconstructed;  ///< xi* + int_0^t xi*_s / (T - s) ds
};

/// Requires a finite_time schedule (ReductionError(regime) otherwise). The stochastic
/// integrals are discrete sums whose per-step weight is the sigma-weighted average of
/// (T - s)^{-1} over the step, so the drift part of xi is integrated exactly.
BridgePaths bridge_transform(const SamplePath& path, const CouplingSchedule& schedule);

struct FiniteTimeComparison {
    BridgePaths bridge;
    std::vector<double> H_information;  ///< from int sigma d xi and int sigma^2
    std::vector<double> H_bridge;       ///< from xi* and t
    std::vector<double> W_information;  ///< xi - int sigma H ds
    std::vector<double> W_bridge;       ///< xi* + int (xi* - sigma T H) / (T - s) ds
    double compare_until = 0.0;
    double max_H_difference = 0.0;              ///< over t <= compare_until
    double max_reconstruction_error = 0.0;      ///< over t <= compare_until
    double max_innovation_difference = 0.0;     ///< over t <= compare_until
    double max_bridge_identity_error = 0.0;     ///< |beta - beta_from_B| over the whole grid
    /// |H(bridge) - H| against the filter driven by the exactly sampled int sigma d xi, t <= compare_until.
    double max_H_difference_exact = 0.0;
    std::vector<double> terminal_posterior;     ///< bridge form at the last grid point
};

FiniteTimeComparison finite_time_equivalence(const Spectrum& spectrum, const SamplePath& path,
                                             const CouplingSchedule& schedule, double compare_fraction = 0.9);

struct BridgeVarianceStat {
    double t = 0.0;
    double variance = 0.0;  ///< sample variance of beta_t over paths
    double expected = 0.0;  ///< t (T - t) / T
    double tolerance = 0.0; ///< 3 expected sqrt(2 / (paths - 1))
};

/// Aggregate of finite_time_equivalence over independent paths.
struct FiniteTimeEnsemble {
    std::size_t path_count = 0;
    double max_H_difference = 0.0;
    double max_reconstruction_error = 0.0;
    double max_innovation_difference = 0.0;
    double max_bridge_identity_error = 0.0;
    double max_H_difference_exact = 0.0;
    double collapsed_fraction = 0.0;  ///< terminal max posterior > 0.999
    double correct_fraction = 0.0;    ///< terminal argmax equals the drawn outcome
    double pinned_fraction = 0.0;     ///< |beta| < 4 pinning_scale at the last grid point
    /// Exact standard deviation of the discrete beta at the last grid point; close to sqrt(T - t)
    /// only when the final step is short compared with T - t.
    double pinning_scale = 0.0;
    std::vector<BridgeVarianceStat> beta_variance;
    std::vector<Flag> flags;

    bool all_passed() const;
};

/// Like default_checkpoints but excluding the last grid point. The final step of a finite-horizon grid
/// is long compared with T - t, so beta there follows the discrete law rather than the bridge law.
std::vector<std::size_t> default_bridge_checkpoints(const TimeGrid& grid, std::size_t count);

/// Flags: H agreement within h_tolerance, collapse on at least 99% of paths, bridge pinning on at
/// least 99%, beta variance within three Monte Carlo standard errors of t(T - t)/T at each
/// checkpoint (default_bridge_checkpoints when none are given), and the bridge identity within 1e-12.
FiniteTimeEnsemble finite_time_ensemble(const Spectrum& spectrum, const CouplingSchedule& schedule,
                                        const TimeGrid& grid, const EnsembleOptions& options,
                                        double compare_fraction = 0.9, double h_tolerance = 1e-6);

}  // namespace reduction
