#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "reduction/coupling.hpp"
#include "reduction/spectrum.hpp"

namespace reduction {

/// Strictly increasing sample times starting at zero.
class TimeGrid {
public:
    TimeGrid() = default;
    explicit TimeGrid(std::vector<double> times);

    /// steps equal intervals on [0, t_end].
    static TimeGrid uniform(double t_end, std::size_t steps);
    /// Equal intervals of T/steps up to T - T/steps, closed by a final point at
    /// T(1 - terminal_gap) when that lies beyond the last uniform point.
    static TimeGrid finite_horizon(double horizon, std::size_t steps, double terminal_gap = 1e-6);
    /// Zero followed by `points` geometrically spaced times in [t_first, t_end].
    static TimeGrid geometric(double t_first, double t_end, std::size_t points);

    std::size_t size() const noexcept { return times_.size(); }
    std::size_t steps() const noexcept { return times_.empty() ? 0 : times_.size() - 1; }
    double operator[](std::size_t j) const { return times_[j]; }
    double back() const { return times_.back(); }
    const std::vector<double>& times() const noexcept { return times_; }

    /// Throws ReductionError(domain) when the grid leaves the schedule's domain.
    void validate_for(const CouplingSchedule& schedule) const;

private:
    std::vector<double> times_;
};

/// Deterministic integrals of the schedule along a grid, shared by the solvers.
struct GridIntegrals {
    std::vector<double> cum_sigma;     ///< int_0^{t_j} sigma
    std::vector<double> cum_sigma_sq;  ///< int_0^{t_j} sigma^2
    std::vector<double> step_sigma;    ///< int_{t_j}^{t_{j+1}} sigma
    std::vector<double> step_sigma_sq; ///< int_{t_j}^{t_{j+1}} sigma^2

    static GridIntegrals compute(const CouplingSchedule& schedule, const TimeGrid& grid);
};

/// Brownian data on a grid: B and the stochastic integral int sigma dB.
struct BrownianData {
    std::vector<double> B;
    std::vector<double> sigma_dB;
};

/// Independent random data (H, B) and the derived information processes.
struct SamplePath {
    TimeGrid grid;
    std::size_t outcome_index = 0;
    double outcome_H = 0.0;
    std::vector<double> B;
    std::vector<double> xi;         ///< H int_0^t sigma + B_t
    std::vector<double> eta;        ///< H int_0^t sigma^2 + int_0^t sigma dB
    std::vector<double> sigma_dB;   ///< int_0^t sigma dB
    /// Steps where the (dB, sigma dB) covariance was numerically singular and
    /// the midpoint-sigma fallback was used.
    std::size_t degenerate_steps = 0;

    BrownianData brownian() const { return {B, sigma_dB}; }
};

struct Moments {
    double mean = 0.0;
    double variance = 0.0;
    double third = 0.0;
};

/// Filter output along a grid.
struct ReductionTrajectory {
    TimeGrid grid;
    std::vector<std::vector<double>> posteriors;
    std::vector<double> energy;
    std::vector<double> variance;
    std::vector<double> third_moment;
    std::vector<double> innovation;
    std::vector<StateVector> states;

    std::size_t size() const noexcept { return energy.size(); }
};

/// Normalizes log-weights with a max shift; entries of -inf map to zero.
std::vector<double> normalize_log_weights(std::span<const double> log_weights);

/// Draws H ~ priors and the Brownian pair (dB, d int sigma dB) exactly per step.
SamplePath sample_path(const Spectrum& spectrum, const CouplingSchedule& schedule, const TimeGrid& grid,
                       std::uint64_t seed);

/// Same as sample_path with the outcome fixed to level k (the Brownian draws are
/// identical to those sample_path makes for the same seed).
SamplePath sample_path_given_outcome(const Spectrum& spectrum, const CouplingSchedule& schedule,
                                     const TimeGrid& grid, std::uint64_t seed, std::size_t k);

/// pi_i proportional to pi_i exp(E_i eta - E_i^2 I / 2), with I = int_0^t sigma^2.
std::vector<double> posterior_from_statistic(const Spectrum& spectrum, double eta, double int_sigma_sq);

std::vector<double> filter_posterior(const Spectrum& spectrum, const CouplingSchedule& schedule, double eta,
                                     double t);

Moments energy_and_moments(const Spectrum& spectrum, std::span<const double> posteriors);

/// H(eta, t) as a function of the sufficient statistic; strictly increasing in eta.
double energy_link(const Spectrum& spectrum, double eta, double int_sigma_sq);
/// Closed-form dH/deta, equal to the posterior energy variance at (eta, t).
double energy_link_slope(const Spectrum& spectrum, double eta, double int_sigma_sq);

/// W_t = xi_t - int_0^t sigma_s H_s ds. Each step's drift uses the exact
/// int sigma over the step times the trapezoidal average of H.
std::vector<double> innovation_path(const SamplePath& path, std::span<const double> energies,
                                    const CouplingSchedule& schedule);

/// Filter a given sample path; states are assembled when basis is non-null.
ReductionTrajectory solve_path(const Spectrum& spectrum, const LuedersBasis* basis,
                               const CouplingSchedule& schedule, const SamplePath& path);

std::pair<SamplePath, ReductionTrajectory> run_exact(const Spectrum& spectrum, const LuedersBasis& basis,
                                                     const CouplingSchedule& schedule, const TimeGrid& grid,
                                                     std::uint64_t seed, bool with_states);

std::pair<SamplePath, ReductionTrajectory> run_exact(const Spectrum& spectrum, const CouplingSchedule& schedule,
                                                     const TimeGrid& grid, std::uint64_t seed);

/// Posterior at t from the posterior at s, using only the increment eta_t - eta_s.
std::vector<double> restart_filter(const Spectrum& spectrum, const CouplingSchedule& schedule,
                                   std::span<const double> posterior_at_s, double s, double eta_increment,
                                   double t);

/// Solution conditional on H = E_k driven by the given Brownian data, written
/// in terms of the gaps omega_ik = E_i - E_k.
ReductionTrajectory conditional_solution(const Spectrum& spectrum, const LuedersBasis* basis,
                                         const CouplingSchedule& schedule, const TimeGrid& grid,
                                         std::size_t k, const BrownianData& brownian);

struct RecoveredData {
    std::size_t outcome_index = 0;
    double H = 0.0;
    std::vector<double> B;
};

/// Reconstructs (H, B) from a trajectory: H is the level with the largest
/// terminal posterior and B_t = xi_t - H int_0^t sigma. Throws AmbiguityError
/// when the terminal max posterior is below 1 - recovery_tol.
RecoveredData recover_random_data(const Spectrum& spectrum, const ReductionTrajectory& trajectory,
                                  std::span<const double> xi, const CouplingSchedule& schedule,
                                  double recovery_tol = 1e-4);

/// xi_t = W_t + int_0^t sigma_s H_s ds, the inverse of innovation_path.
std::vector<double> information_from_innovation(const ReductionTrajectory& trajectory,
                                                const CouplingSchedule& schedule);

std::size_t argmax(std::span<const double> values);

}  // namespace reduction
