#include "reduction/exact_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "reduction/errors.hpp"
#include "reduction/rng.hpp"

namespace reduction {

namespace {
constexpr const char* kModule = "exact_solver";
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Residual variance of the sigma dB increment below this fraction of its total
// variance is treated as a singular covariance.
constexpr double kSingularFraction = 1e-12;

[[noreturn]] void fail(ErrorKind kind, const std::string& what) {
    throw ReductionError(kind, kModule, what);
}

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

std::size_t draw_outcome(const Spectrum& spectrum, double u) {
    double acc = 0.0;
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        acc += spectrum.prior(i);
        if (u < acc) return i;
    }
    // u landed in the rounding slack above the cumulative sum: take the last supported level.
    for (std::size_t i = spectrum.size(); i-- > 0;) {
        if (spectrum.prior(i) > 0.0) return i;
    }
    return spectrum.size() - 1;
}

SamplePath sample_with(const Spectrum& spectrum, const CouplingSchedule& schedule, const TimeGrid& grid,
                       std::uint64_t seed, const std::size_t* forced_outcome) {
    grid.validate_for(schedule);
    const GridIntegrals gi = GridIntegrals::compute(schedule, grid);
    PathRng rng(seed);

    SamplePath path;
    path.grid = grid;
    const double u = rng.uniform();
    path.outcome_index = forced_outcome ? *forced_outcome : draw_outcome(spectrum, u);
    if (path.outcome_index >= spectrum.size()) fail(ErrorKind::index, "outcome index out of range");
    path.outcome_H = spectrum.energy(path.outcome_index);

    const std::size_t n = grid.size();
    path.B.assign(n, 0.0);
    path.sigma_dB.assign(n, 0.0);
    path.xi.assign(n, 0.0);
    path.eta.assign(n, 0.0);

    for (std::size_t j = 0; j + 1 < n; ++j) {
        const double dt = grid[j + 1] - grid[j];
        const double a = gi.step_sigma[j];
        const double b = gi.step_sigma_sq[j];
        const double z1 = rng.normal();
        const double z2 = rng.normal();
        const double sqrt_dt = std::sqrt(dt);
        const double dB = sqrt_dt * z1;
        const double residual = b - a * a / dt;
        double dJ;
        if (residual > kSingularFraction * b) {
            dJ = (a / sqrt_dt) * z1 + std::sqrt(residual) * z2;
        } else {
            dJ = schedule.sigma(0.5 * (grid[j] + grid[j + 1])) * dB;
            ++path.degenerate_steps;
        }
        path.B[j + 1] = path.B[j] + dB;
        path.sigma_dB[j + 1] = path.sigma_dB[j] + dJ;
    }
    for (std::size_t j = 0; j < n; ++j) {
        path.xi[j] = path.outcome_H * gi.cum_sigma[j] + path.B[j];
        path.eta[j] = path.outcome_H * gi.cum_sigma_sq[j] + path.sigma_dB[j];
    }
    return path;
}

std::vector<double> trapezoid_drift(std::span<const double> energies, const GridIntegrals& gi) {
    std::vector<double> drift(energies.size(), 0.0);
    for (std::size_t j = 0; j + 1 < energies.size(); ++j) {
        drift[j + 1] = drift[j] + 0.5 * (energies[j] + energies[j + 1]) * gi.step_sigma[j];
    }
    return drift;
}

void fill_moments(const Spectrum& spectrum, ReductionTrajectory& traj) {
    const std::size_t n = traj.posteriors.size();
    traj.energy.resize(n);
    traj.variance.resize(n);
    traj.third_moment.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        const Moments m = energy_and_moments(spectrum, traj.posteriors[j]);
        traj.energy[j] = m.mean;
        traj.variance[j] = m.variance;
        traj.third_moment[j] = m.third;
    }
}

void fill_states(const Spectrum& spectrum, const LuedersBasis& basis, ReductionTrajectory& traj) {
    traj.states.clear();
    traj.states.reserve(traj.posteriors.size());
    for (std::size_t j = 0; j < traj.posteriors.size(); ++j) {
        traj.states.push_back(assemble_state(spectrum, basis, traj.posteriors[j], traj.grid[j]));
    }
}
}  // namespace

TimeGrid::TimeGrid(std::vector<double> times) : times_(std::move(times)) {
    if (times_.empty() || times_.front() != 0.0) fail(ErrorKind::validation, "time grid must start at 0");
    for (std::size_t j = 1; j < times_.size(); ++j) {
        if (!(times_[j] > times_[j - 1]) || !std::isfinite(times_[j])) {
            fail(ErrorKind::validation, "time grid must be strictly increasing and finite");
        }
    }
}

TimeGrid TimeGrid::uniform(double t_end, std::size_t steps) {
    if (steps == 0 || !(t_end > 0.0)) fail(ErrorKind::validation, "uniform grid needs t_end > 0 and steps >= 1");
    std::vector<double> t(steps + 1);
    for (std::size_t j = 0; j <= steps; ++j) t[j] = t_end * static_cast<double>(j) / static_cast<double>(steps);
    return TimeGrid(std::move(t));
}

TimeGrid TimeGrid::finite_horizon(double horizon, std::size_t steps, double terminal_gap) {
    if (steps < 2 || !(horizon > 0.0)) fail(ErrorKind::validation, "finite-horizon grid needs T > 0 and steps >= 2");
    std::vector<double> t;
    t.reserve(steps + 1);
    for (std::size_t j = 0; j < steps; ++j) {
        t.push_back(horizon * static_cast<double>(j) / static_cast<double>(steps));
    }
    const double last = horizon * (1.0 - terminal_gap);
    if (last > t.back()) t.push_back(last);
    return TimeGrid(std::move(t));
}

TimeGrid TimeGrid::geometric(double t_first, double t_end, std::size_t points) {
    if (points < 1 || !(t_first > 0.0) || !(t_end >= t_first)) fail(ErrorKind::validation, "bad geometric grid");
    std::vector<double> t{0.0};
    const double ratio = points > 1 ? std::pow(t_end / t_first, 1.0 / static_cast<double>(points - 1)) : 1.0;
    double cur = t_first;
    for (std::size_t j = 0; j < points; ++j) {
        t.push_back(j + 1 == points ? t_end : cur);
        cur *= ratio;
    }
    return TimeGrid(std::move(t));
}

void TimeGrid::validate_for(const CouplingSchedule& schedule) const {
    if (times_.empty()) fail(ErrorKind::validation, "empty time grid");
    if (!schedule.in_domain(times_.back())) {
        std::ostringstream os;
        os << "grid end " << times_.back() << " lies outside the coupling domain";
        if (auto h = schedule.horizon()) os << " (horizon T = " << *h << ")";
        fail(ErrorKind::domain, os.str());
    }
}

GridIntegrals GridIntegrals::compute(const CouplingSchedule& schedule, const TimeGrid& grid) {
    GridIntegrals gi;
    const std::size_t n = grid.size();
    gi.cum_sigma.resize(n);
    gi.cum_sigma_sq.resize(n);
    gi.step_sigma.resize(n > 0 ? n - 1 : 0);
    gi.step_sigma_sq.resize(n > 0 ? n - 1 : 0);
    for (std::size_t j = 0; j < n; ++j) {
        gi.cum_sigma[j] = schedule.int_sigma(0.0, grid[j]);
        gi.cum_sigma_sq[j] = schedule.int_sigma_sq(0.0, grid[j]);
        if (j + 1 < n) {
            gi.step_sigma[j] = schedule.int_sigma(grid[j], grid[j + 1]);
            gi.step_sigma_sq[j] = schedule.int_sigma_sq(grid[j], grid[j + 1]);
        }
    }
    return gi;
}

std::vector<double> normalize_log_weights(std::span<const double> log_weights) {
    double top = kNegInf;
    for (double l : log_weights) top = std::max(top, l);
    if (!std::isfinite(top)) fail(ErrorKind::input, "log-weights have no finite maximum");
    std::vector<double> w(log_weights.size());
    double total = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp(log_weights[i] - top);
        total += w[i];
    }
    for (double& x : w) x /= total;
    return w;
}

SamplePath sample_path(const Spectrum& spectrum, const CouplingSchedule& schedule, const TimeGrid& grid,
                       std::uint64_t seed) {
    return sample_with(spectrum, schedule, grid, seed, nullptr);
}

SamplePath sample_path_given_outcome(const Spectrum& spectrum, const CouplingSchedule& schedule,
                                     const TimeGrid& grid, std::uint64_t seed, std::size_t k) {
    return sample_with(spectrum, schedule, grid, seed, &k);
}

std::vector<double> posterior_from_statistic(const Spectrum& spectrum, double eta, double int_sigma_sq) {
    if (!std::isfinite(eta) || !std::isfinite(int_sigma_sq)) fail(ErrorKind::input, "non-finite filter statistic");
    std::vector<double> logw(spectrum.size());
    bool flat = true;
    for (std::size_t i = 0; i < logw.size(); ++i) {
        const double e = spectrum.energy(i);
        const double exponent = e * eta - 0.5 * e * e * int_sigma_sq;
        flat = flat && exponent == 0.0;
        logw[i] = safe_log(spectrum.prior(i)) + exponent;
    }
    // No information: return the priors without a rounding round trip.
    if (flat) return spectrum.priors();
    return normalize_log_weights(logw);
}

std::vector<double> filter_posterior(const Spectrum& spectrum, const CouplingSchedule& schedule, double eta,
                                     double t) {
    if (!(t >= 0.0)) fail(ErrorKind::domain, "filter time must be nonnegative");
    return posterior_from_statistic(spectrum, eta, schedule.int_sigma_sq(0.0, t));
}

Moments energy_and_moments(const Spectrum& spectrum, std::span<const double> posteriors) {
    if (posteriors.size() != spectrum.size()) fail(ErrorKind::dimension, "posterior length mismatch");
    Moments m;
    for (std::size_t i = 0; i < posteriors.size(); ++i) m.mean += posteriors[i] * spectrum.energy(i);
    for (std::size_t i = 0; i < posteriors.size(); ++i) {
        const double d = spectrum.energy(i) - m.mean;
        m.variance += posteriors[i] * d * d;
        m.third += posteriors[i] * d * d * d;
    }
    return m;
}

double energy_link(const Spectrum& spectrum, double eta, double int_sigma_sq) {
    const auto p = posterior_from_statistic(spectrum, eta, int_sigma_sq);
    return energy_and_moments(spectrum, p).mean;
}

double energy_link_slope(const Spectrum& spectrum, double eta, double int_sigma_sq) {
    // Ratio of sum pi_i (E_i - H)^2 w_i to sum pi_i w_i with shifted exponents.
    const double h = energy_link(spectrum, eta, int_sigma_sq);
    std::vector<double> logw(spectrum.size());
    double top = kNegInf;
    for (std::size_t i = 0; i < logw.size(); ++i) {
        const double e = spectrum.energy(i);
        logw[i] = safe_log(spectrum.prior(i)) + e * eta - 0.5 * e * e * int_sigma_sq;
        top = std::max(top, logw[i]);
    }
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < logw.size(); ++i) {
        const double w = std::exp(logw[i] - top);
        const double d = spectrum.energy(i) - h;
        num += d * d * w;
        den += w;
    }
    return num / den;
}

std::vector<double> innovation_path(const SamplePath& path, std::span<const double> energies,
                                    const CouplingSchedule& schedule) {
    if (energies.size() != path.xi.size() || path.xi.size() != path.grid.size()) {
        fail(ErrorKind::dimension, "energy path length differs from the sample path");
    }
    const GridIntegrals gi = GridIntegrals::compute(schedule, path.grid);
    const auto drift = trapezoid_drift(energies, gi);
    std::vector<double> w(path.xi.size());
    for (std::size_t j = 0; j < w.size(); ++j) w[j] = path.xi[j] - drift[j];
    w[0] = 0.0;
    return w;
}

ReductionTrajectory solve_path(const Spectrum& spectrum, const LuedersBasis* basis,
                               const CouplingSchedule& schedule, const SamplePath& path) {
    const GridIntegrals gi = GridIntegrals::compute(schedule, path.grid);
    ReductionTrajectory traj;
    traj.grid = path.grid;
    traj.posteriors.reserve(path.grid.size());
    for (std::size_t j = 0; j < path.grid.size(); ++j) {
        traj.posteriors.push_back(posterior_from_statistic(spectrum, path.eta[j], gi.cum_sigma_sq[j]));
    }
    fill_moments(spectrum, traj);
    const auto drift = trapezoid_drift(traj.energy, gi);
    traj.innovation.resize(path.grid.size());
    for (std::size_t j = 0; j < traj.innovation.size(); ++j) traj.innovation[j] = path.xi[j] - drift[j];
    traj.innovation[0] = 0.0;
    if (basis) fill_states(spectrum, *basis, traj);
    return traj;
}

std::pair<SamplePath, ReductionTrajectory> run_exact(const Spectrum& spectrum, const LuedersBasis& basis,
                                                     const CouplingSchedule& schedule, const TimeGrid& grid,
                                                     std::uint64_t seed, bool with_states) {
    SamplePath path = sample_path(spectrum, schedule, grid, seed);
    ReductionTrajectory traj = solve_path(spectrum, with_states ? &basis : nullptr, schedule, path);
    return {std::move(path), std::move(traj)};
}

std::pair<SamplePath, ReductionTrajectory> run_exact(const Spectrum& spectrum, const CouplingSchedule& schedule,
                                                     const TimeGrid& grid, std::uint64_t seed) {
    SamplePath path = sample_path(spectrum, schedule, grid, seed);
    ReductionTrajectory traj = solve_path(spectrum, nullptr, schedule, path);
    return {std::move(path), std::move(traj)};
}

std::vector<double> restart_filter(const Spectrum& spectrum, const CouplingSchedule& schedule,
                                   std::span<const double> posterior_at_s, double s, double eta_increment,
                                   double t) {
    if (posterior_at_s.size() != spectrum.size()) fail(ErrorKind::dimension, "posterior length mismatch");
    if (!(s >= 0.0) || !(t >= s)) fail(ErrorKind::domain, "restart requires 0 <= s <= t");
    if (s == t) return {posterior_at_s.begin(), posterior_at_s.end()};
    const double i_st = schedule.int_sigma_sq(s, t);
    std::vector<double> logw(spectrum.size());
    for (std::size_t i = 0; i < logw.size(); ++i) {
        const double e = spectrum.energy(i);
        logw[i] = safe_log(posterior_at_s[i]) + e * eta_increment - 0.5 * e * e * i_st;
    }
    return normalize_log_weights(logw);
}

ReductionTrajectory conditional_solution(const Spectrum& spectrum, const LuedersBasis* basis,
                                         const CouplingSchedule& schedule, const TimeGrid& grid,
                                         std::size_t k, const BrownianData& brownian) {
    if (k >= spectrum.size()) fail(ErrorKind::index, "conditioning level index out of range");
    if (brownian.B.size() != grid.size() || brownian.sigma_dB.size() != grid.size()) {
        fail(ErrorKind::dimension, "Brownian data length differs from the grid");
    }
    const GridIntegrals gi = GridIntegrals::compute(schedule, grid);
    const double ek = spectrum.energy(k);

    ReductionTrajectory traj;
    traj.grid = grid;
    traj.posteriors.reserve(grid.size());
    std::vector<double> logw(spectrum.size());
    for (std::size_t j = 0; j < grid.size(); ++j) {
        for (std::size_t i = 0; i < spectrum.size(); ++i) {
            const double omega = spectrum.energy(i) - ek;
            logw[i] = safe_log(spectrum.prior(i)) - 0.5 * omega * omega * gi.cum_sigma_sq[j] +
                      omega * brownian.sigma_dB[j];
        }
        traj.posteriors.push_back(normalize_log_weights(logw));
    }
    fill_moments(spectrum, traj);

    std::vector<double> xi(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) xi[j] = ek * gi.cum_sigma[j] + brownian.B[j];
    const auto drift = trapezoid_drift(traj.energy, gi);
    traj.innovation.resize(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) traj.innovation[j] = xi[j] - drift[j];
    traj.innovation[0] = 0.0;
    if (basis) fill_states(spectrum, *basis, traj);
    return traj;
}

std::size_t argmax(std::span<const double> values) {
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

RecoveredData recover_random_data(const Spectrum& spectrum, const ReductionTrajectory& trajectory,
                                  std::span<const double> xi, const CouplingSchedule& schedule,
                                  double recovery_tol) {
    if (trajectory.posteriors.empty()) fail(ErrorKind::dimension, "empty trajectory");
    if (xi.size() != trajectory.grid.size()) fail(ErrorKind::dimension, "xi length differs from the grid");
    const auto& terminal = trajectory.posteriors.back();
    const std::size_t k = argmax(terminal);
    if (terminal[k] < 1.0 - recovery_tol) {
        std::ostringstream os;
        os << "trajectory not collapsed: terminal max posterior " << terminal[k] << " < 1 - " << recovery_tol;
        throw AmbiguityError(os.str(), terminal);
    }
    RecoveredData out;
    out.outcome_index = k;
    out.H = spectrum.energy(k);
    out.B.resize(xi.size());
    for (std::size_t j = 0; j < xi.size(); ++j) {
        out.B[j] = xi[j] - out.H * schedule.int_sigma(0.0, trajectory.grid[j]);
    }
    return out;
}

std::vector<double> information_from_innovation(const ReductionTrajectory& trajectory,
                                                const CouplingSchedule& schedule) {
    const GridIntegrals gi = GridIntegrals::compute(schedule, trajectory.grid);
    const auto drift = trapezoid_drift(trajectory.energy, gi);
    std::vector<double> xi(drift.size());
    for (std::size_t j = 0; j < xi.size(); ++j) xi[j] = trajectory.innovation[j] + drift[j];
    return xi;
}

}  // namespace reduction
