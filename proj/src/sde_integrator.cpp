#include "reduction/sde_integrator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "reduction/detail/parallel.hpp"
#include "reduction/errors.hpp"
#include "reduction/rng.hpp"

namespace reduction {

namespace {
constexpr const char* kModule = "sde_integrator";

[[noreturn]] void fail(ErrorKind kind, const std::string& what) {
    throw ReductionError(kind, kModule, what);
}

std::size_t step_ratio(double coarse, double fine, const char* what) {
    const double r = coarse / fine;
    const double k = std::round(r);
    if (!(k >= 1.0) || std::abs(r - k) > 1e-9 * k) fail(ErrorKind::validation, what);
    return static_cast<std::size_t>(k);
}

double median(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const std::size_t m = xs.size() / 2;
    return xs.size() % 2 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
}

void check_path(const TimeGrid& grid, std::span<const double> brownian) {
    if (brownian.size() != grid.size()) fail(ErrorKind::dimension, "Brownian path length differs from the grid");
}
}  // namespace

DensityMatrix::DensityMatrix(ComplexMatrix rho, double tol) : rho_(std::move(rho)) {
    if (rho_.rows() == 0 || rho_.rows() != rho_.cols()) fail(ErrorKind::dimension, "density matrix must be square");
    const double herm = (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff();
    const Complex tr = rho_.trace();
    if (herm > tol || std::abs(tr - Complex(1.0, 0.0)) > tol) {
        std::ostringstream os;
        os << "invalid density matrix (Hermiticity defect " << herm << ", trace " << tr << ")";
        fail(ErrorKind::validation, os.str());
    }
}

DensityMatrix DensityMatrix::pure(const StateVector& state) {
    const ComplexVector& v = state.amplitudes();
    return DensityMatrix(v * v.adjoint(), 1e-10);
}

double DensityMatrix::expectation(const ComplexMatrix& observable) const {
    return (rho_ * observable).trace().real();
}

double DensityMatrix::min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(rho_, Eigen::EigenvaluesOnly);
    return solver.eigenvalues()(0);
}

StateVector em_step_state(const StateVector& state, const ComplexMatrix& hamiltonian, double sigma, double dt,
                          double dW, const IntegratorConfig& config) {
    const ComplexVector& psi = state.amplitudes();
    if (hamiltonian.rows() != psi.size()) fail(ErrorKind::dimension, "Hamiltonian and state dimensions differ");
    const ComplexVector h_psi = hamiltonian * psi;
    const double h_t = psi.dot(h_psi).real();
    const ComplexVector centred = h_psi - h_t * psi;                      // (H - H_t) psi
    const ComplexVector centred2 = hamiltonian * centred - h_t * centred;  // (H - H_t)^2 psi
    const Complex minus_i(0.0, -1.0);
    ComplexVector next = psi + (minus_i * dt) * h_psi - (0.125 * sigma * sigma * dt) * centred2 +
                         (0.5 * sigma * dW) * centred;
    if (config.renormalize_each_step) return StateVector::normalized(std::move(next));
    return StateVector(std::move(next), std::numeric_limits<double>::infinity());
}

std::vector<double> em_step_pi(std::span<const double> posteriors, const Spectrum& spectrum, double sigma,
                               double dW) {
    if (posteriors.size() != spectrum.size()) fail(ErrorKind::dimension, "posterior length mismatch");
    const Moments m = energy_and_moments(spectrum, posteriors);
    std::vector<double> next(posteriors.size());
    double total = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i) {
        const double p = posteriors[i] + sigma * (spectrum.energy(i) - m.mean) * posteriors[i] * dW;
        next[i] = std::clamp(p, 0.0, 1.0);
        total += next[i];
    }
    if (!(total > 0.0)) fail(ErrorKind::input, "posterior step lost all mass");
    for (double& p : next) p /= total;
    return next;
}

DensityMatrix density_step(const DensityMatrix& rho, const ComplexMatrix& hamiltonian, double sigma, double dt) {
    const ComplexMatrix& r = rho.matrix();
    if (hamiltonian.rows() != r.rows()) fail(ErrorKind::dimension, "Hamiltonian and density matrix dimensions differ");
    const ComplexMatrix hr = hamiltonian * r;
    const ComplexMatrix rh = r * hamiltonian;
    const ComplexMatrix hrh = hr * hamiltonian;
    const ComplexMatrix h2r = hamiltonian * hr;
    const ComplexMatrix rh2 = rh * hamiltonian;
    const Complex minus_i(0.0, -1.0);
    ComplexMatrix next = r + (minus_i * dt) * (hr - rh) +
                         (0.25 * sigma * sigma * dt) * (hrh - 0.5 * h2r - 0.5 * rh2);
    next = 0.5 * (next + next.adjoint()).eval();
    next /= next.trace().real();
    return DensityMatrix(std::move(next), DensityMatrix::Unchecked{});
}

std::vector<std::vector<double>> integrate_posteriors(const Spectrum& spectrum, const CouplingSchedule& schedule,
                                                      const TimeGrid& grid, std::span<const double> brownian) {
    check_path(grid, brownian);
    std::vector<std::vector<double>> out;
    out.reserve(grid.size());
    out.push_back(spectrum.priors());
    for (std::size_t j = 0; j + 1 < grid.size(); ++j) {
        out.push_back(em_step_pi(out.back(), spectrum, schedule.sigma(grid[j]), brownian[j + 1] - brownian[j]));
    }
    return out;
}

std::vector<StateVector> integrate_state(const StateVector& initial_state, const ComplexMatrix& hamiltonian,
                                         const CouplingSchedule& schedule, const TimeGrid& grid,
                                         std::span<const double> brownian, const IntegratorConfig& config) {
    check_path(grid, brownian);
    std::vector<StateVector> out;
    out.reserve(grid.size());
    out.push_back(initial_state);
    for (std::size_t j = 0; j + 1 < grid.size(); ++j) {
        out.push_back(em_step_state(out.back(), hamiltonian, schedule.sigma(grid[j]), grid[j + 1] - grid[j],
                                    brownian[j + 1] - brownian[j], config));
    }
    return out;
}

std::vector<DensityMatrix> integrate_density(const DensityMatrix& initial, const ComplexMatrix& hamiltonian,
                                             const CouplingSchedule& schedule, const TimeGrid& grid) {
    std::vector<DensityMatrix> out;
    out.reserve(grid.size());
    out.push_back(initial);
    for (std::size_t j = 0; j + 1 < grid.size(); ++j) {
        out.push_back(density_step(out.back(), hamiltonian, schedule.sigma(grid[j]), grid[j + 1] - grid[j]));
    }
    return out;
}

LinearizedSolution linearized_solution(const Spectrum& spectrum, const CouplingSchedule& schedule,
                                       double sigma_dxi, double t) {
    const double i_t = schedule.int_sigma_sq(0.0, t);
    LinearizedSolution sol;
    sol.sigma_dxi = sigma_dxi;
    sol.log_weights.resize(spectrum.size());
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        const double e = spectrum.energy(i);
        const double p = spectrum.prior(i);
        sol.log_weights[i] = (p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity()) + e * sigma_dxi -
                             0.5 * e * e * i_t;
    }
    sol.posteriors = normalize_log_weights(sol.log_weights);
    return sol;
}

LinearizedSolution linearized_solution(const Spectrum& spectrum, const CouplingSchedule& schedule,
                                       const TimeGrid& grid, std::span<const double> xi, std::size_t index) {
    if (xi.size() != grid.size() || index >= grid.size()) fail(ErrorKind::dimension, "xi path / index mismatch");
    double s = 0.0;
    for (std::size_t j = 0; j < index; ++j) s += schedule.sigma(grid[j]) * (xi[j + 1] - xi[j]);
    return linearized_solution(spectrum, schedule, s, grid[index]);
}

StateVector linearized_state(const ComplexMatrix& hamiltonian, const StateVector& initial_state, double sigma_dxi,
                             double int_sigma_sq, double t) {
    const ComplexMatrix h = 0.5 * (hamiltonian + hamiltonian.adjoint());
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(h);
    const Eigen::VectorXd& lam = solver.eigenvalues();
    const ComplexMatrix& v = solver.eigenvectors();
    const ComplexVector coeff = v.adjoint() * initial_state.amplitudes();

    // Real part of the exponent, shifted by its maximum over occupied modes.
    Eigen::VectorXd re(lam.size());
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < lam.size(); ++k) {
        re(k) = 0.5 * lam(k) * sigma_dxi - 0.25 * lam(k) * lam(k) * int_sigma_sq;
        if (std::abs(coeff(k)) > 0.0) top = std::max(top, re(k));
    }
    ComplexVector scaled(lam.size());
    for (Eigen::Index k = 0; k < lam.size(); ++k) {
        scaled(k) = coeff(k) * std::polar(std::exp(re(k) - top), -lam(k) * t);
    }
    return StateVector::normalized(v * scaled);
}

ConvergenceStudy strong_convergence(const Spectrum& spectrum, const LuedersBasis& basis,
                                    const ComplexMatrix& hamiltonian, const StateVector& initial_state,
                                    const CouplingSchedule& schedule, double t_end,
                                    std::span<const double> dt_values, double reference_dt, std::size_t paths,
                                    std::uint64_t master_seed, unsigned threads) {
    if (paths == 0 || dt_values.empty()) fail(ErrorKind::validation, "convergence study needs paths and step sizes");
    if (basis.size() != spectrum.size()) fail(ErrorKind::dimension, "basis and spectrum sizes differ");
    const std::size_t fine_steps = step_ratio(t_end, reference_dt, "reference_dt must divide t_end");
    std::vector<std::size_t> strides;
    for (double dt : dt_values) {
        strides.push_back(step_ratio(dt, reference_dt, "each dt must be a multiple of reference_dt"));
        if (fine_steps % strides.back() != 0) fail(ErrorKind::validation, "each dt must divide t_end");
    }
    const TimeGrid fine = TimeGrid::uniform(t_end, fine_steps);

    ConvergenceStudy study;
    study.t_end = t_end;
    study.reference_dt = reference_dt;
    study.paths = paths;
    for (double dt : dt_values) {
        ConvergenceLevel level;
        level.dt = dt;
        level.path_errors_pi.assign(paths, 0.0);
        level.path_errors_state.assign(paths, 0.0);
        study.levels.push_back(std::move(level));
    }

    detail::parallel_for(paths, threads, [&](std::size_t p) {
        const SamplePath sp = sample_path(spectrum, schedule, fine, path_seed(master_seed, p));
        const ReductionTrajectory exact = solve_path(spectrum, nullptr, schedule, sp);
        for (std::size_t m = 0; m < strides.size(); ++m) {
            const std::size_t stride = strides[m];
            std::vector<double> coarse_times;
            std::vector<double> coarse_w;
            for (std::size_t j = 0; j < fine.size(); j += stride) {
                coarse_times.push_back(fine[j]);
                coarse_w.push_back(exact.innovation[j]);
            }
            const TimeGrid coarse(std::move(coarse_times));
            const auto pis = integrate_posteriors(spectrum, schedule, coarse, coarse_w);
            const auto states = integrate_state(initial_state, hamiltonian, schedule, coarse, coarse_w);
            double err_pi = 0.0;
            double err_state = 0.0;
            for (std::size_t c = 0; c < coarse.size(); ++c) {
                const auto& ref = exact.posteriors[c * stride];
                for (std::size_t i = 0; i < spectrum.size(); ++i) {
                    err_pi = std::max(err_pi, std::abs(pis[c][i] - ref[i]));
                    const double amp = std::norm(basis.vector(i).dot(states[c].amplitudes()));
                    err_state = std::max(err_state, std::abs(amp - ref[i]));
                }
            }
            study.levels[m].path_errors_pi[p] = err_pi;
            study.levels[m].path_errors_state[p] = err_state;
        }
    });

    for (auto& level : study.levels) {
        level.median_error_pi = median(level.path_errors_pi);
        level.median_error_state = median(level.path_errors_state);
    }
    return study;
}

}  // namespace reduction
