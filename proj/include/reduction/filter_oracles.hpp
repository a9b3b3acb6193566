#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "reduction/coupling.hpp"
#include "reduction/spectrum.hpp"

namespace reduction {

/// Values of xi on the equally spaced partition s_k = k t / n, k = 0..n.
class DiscretizedPath {
public:
    /// xi_values[0] must be zero; a single point (n = 0) leaves the priors unchanged.
    DiscretizedPath(double t, std::vector<double> xi_values);

    /// Every `stride`-th point of a uniform fine path on [0, t].
    static DiscretizedPath subsample(double t, std::span<const double> fine_xi, std::size_t stride);

    std::size_t steps() const noexcept { return xi_.size() - 1; }
    double horizon() const noexcept { return t_; }
    double delta() const noexcept { return t_ / static_cast<double>(steps()); }
    double time(std::size_t k) const noexcept { return static_cast<double>(k) * delta(); }
    const std::vector<double>& xi() const noexcept { return xi_; }

private:
    double t_;
    std::vector<double> xi_;
};

/// Posterior from the discretized path density, O(n):
/// pi_i exp(E_i sum sigma_{s_k} dxi_k - E_i^2/2 sum sigma_{s_k}^2 Delta).
std::vector<double> bayes_path_posterior(const Spectrum& spectrum, const CouplingSchedule& schedule,
                                         const DiscretizedPath& path);

/// Same posterior evaluated as the Gaussian quadratic form m^T S^{-1} x - m^T S^{-1} m / 2 with the
/// tridiagonal inverse covariance of Brownian motion and mean m_k = E_i sum_{j<k} sigma_{s_j} Delta.
std::vector<double> bayes_path_posterior_quadratic(const Spectrum& spectrum, const CouplingSchedule& schedule,
                                                   const DiscretizedPath& path);

enum class VarianceRule { exact, approximate };

/// Increments y_k of zeta (d zeta = sigma^{-1} d xi) with per-step variances v_k.
struct IncrementObservations {
    double delta = 0.0;
    std::vector<double> y;
    std::vector<double> v;

    /// y_k = dxi_k / sigma_{s_k}; v_k = int sigma^{-2} over the step (exact) or sigma_{s_k}^{-2} Delta.
    static IncrementObservations from_path(const CouplingSchedule& schedule, const DiscretizedPath& path,
                                           VarianceRule rule = VarianceRule::exact);
    /// Throws ReductionError(validation) on length mismatch or non-positive v.
    void validate() const;
};

/// pi_i exp(E_i Delta sum y/v - E_i^2/2 sum Delta^2 / v).
std::vector<double> increment_posterior(const Spectrum& spectrum, const IncrementObservations& observations);

/// Dense covariance min(s_k, s_l) of the observations and its tridiagonal inverse, k, l = 1..n.
/// n is limited to 500.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> covariance_check(double t, std::size_t n);

/// Worst-case deviation of an oracle from the exact filter at one resolution.
struct OracleReport {
    std::string oracle;
    std::size_t n = 0;
    double max_abs_error = 0.0;
    std::vector<double> per_level_errors;
    std::uint64_t path_seed = 0;  ///< seed of the path attaining max_abs_error
};

struct OracleComparison {
    std::vector<OracleReport> reports;
    /// Largest |path-density - increment| over all paths and resolutions.
    double cross_oracle_error = 0.0;
};

/// Samples path_count exact paths on a uniform grid with max(n_values) steps over [0, t] and
/// compares both oracles, on subsampled data, with the exact filter at t. Every n must divide
/// the finest resolution.
OracleComparison compare_oracles(const Spectrum& spectrum, const CouplingSchedule& schedule, double t,
                                 std::span<const std::size_t> n_values, std::size_t path_count,
                                 std::uint64_t master_seed);

}  // namespace reduction
