#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "reduction/coupling.hpp"
#include "reduction/exact_solver.hpp"
#include "reduction/spectrum.hpp"

namespace reduction {

/// Explicit Euler-Maruyama on a fixed grid.
struct IntegratorConfig {
    bool renormalize_each_step = true;
};

/// Unit-trace Hermitian matrix.
class DensityMatrix {
public:
    DensityMatrix() = default;
    /// Throws ReductionError(validation) unless rho is Hermitian and unit-trace within tol.
    explicit DensityMatrix(ComplexMatrix rho, double tol = 1e-10);

    static DensityMatrix pure(const StateVector& state);

    const ComplexMatrix& matrix() const noexcept { return rho_; }
    Complex trace() const { return rho_.trace(); }
    /// tr(rho H).
    double expectation(const ComplexMatrix& observable) const;
    double min_eigenvalue() const;

private:
    friend DensityMatrix density_step(const DensityMatrix&, const ComplexMatrix&, double, double);
    struct Unchecked {};
    DensityMatrix(ComplexMatrix rho, Unchecked) : rho_(std::move(rho)) {}

    ComplexMatrix rho_;
};

/// One step of d|psi> = -iH psi dt - sigma^2/8 (H - H_t)^2 psi dt + sigma/2 (H - H_t) psi dW.
StateVector em_step_state(const StateVector& state, const ComplexMatrix& hamiltonian, double sigma, double dt,
                          double dW, const IntegratorConfig& config = {});

/// One step of d pi_i = sigma (E_i - H_t) pi_i dW, clipped at zero and renormalized.
std::vector<double> em_step_pi(std::span<const double> posteriors, const Spectrum& spectrum, double sigma,
                               double dW);

/// Explicit step of d rho/dt = -i[H, rho] + sigma^2/4 (H rho H - H^2 rho / 2 - rho H^2 / 2),
/// symmetrized and trace-renormalized.
DensityMatrix density_step(const DensityMatrix& rho, const ComplexMatrix& hamiltonian, double sigma, double dt);

/// Drives em_step_pi along the grid with increments of the given Brownian path;
/// sigma is evaluated at the left end of each step.
std::vector<std::vector<double>> integrate_posteriors(const Spectrum& spectrum, const CouplingSchedule& schedule,
                                                      const TimeGrid& grid, std::span<const double> brownian);

std::vector<StateVector> integrate_state(const StateVector& initial_state, const ComplexMatrix& hamiltonian,
                                         const CouplingSchedule& schedule, const TimeGrid& grid,
                                         std::span<const double> brownian, const IntegratorConfig& config = {});

std::vector<DensityMatrix> integrate_density(const DensityMatrix& initial, const ComplexMatrix& hamiltonian,
                                             const CouplingSchedule& schedule, const TimeGrid& grid);

/// Solution of the linear equation d|Psi> = -iH Psi dt - sigma^2/8 H^2 Psi dt + sigma/2 H Psi dxi,
/// evaluated in closed form from int sigma dxi and int sigma^2.
struct LinearizedSolution {
    double sigma_dxi = 0.0;        ///< int_0^t sigma dxi used for the weights
    std::vector<double> log_weights;  ///< log(pi_i) + E_i int sigma dxi - E_i^2 int sigma^2 / 2
    std::vector<double> posteriors;
};

/// Weights from a left-point Ito sum of sigma dxi over grid[0..index].
LinearizedSolution linearized_solution(const Spectrum& spectrum, const CouplingSchedule& schedule,
                                       const TimeGrid& grid, std::span<const double> xi, std::size_t index);

/// Weights for a given value of int_0^t sigma dxi.
LinearizedSolution linearized_solution(const Spectrum& spectrum, const CouplingSchedule& schedule,
                                       double sigma_dxi, double t);

/// |Psi_t> = exp(-iHt + H s/2 - H^2 I/4)|psi_0> built from the Hamiltonian's own
/// eigen-decomposition (s = int sigma dxi, I = int sigma^2), then normalized.
StateVector linearized_state(const ComplexMatrix& hamiltonian, const StateVector& initial_state, double sigma_dxi,
                             double int_sigma_sq, double t);

/// Strong error of the Euler-Maruyama routes against the exact solver on shared noise.
struct ConvergenceLevel {
    double dt = 0.0;
    /// Median over paths of max_{t, i} |pi_i^EM - pi_i^exact| for the posterior SDE.
    double median_error_pi = 0.0;
    /// Same for the state SDE, with pi_i = |<phi_i|psi>|^2.
    double median_error_state = 0.0;
    std::vector<double> path_errors_pi;
    std::vector<double> path_errors_state;
};

struct ConvergenceStudy {
    double t_end = 0.0;
    double reference_dt = 0.0;
    std::size_t paths = 0;
    std::vector<ConvergenceLevel> levels;
};

/// Samples exact paths on a reference grid of step reference_dt over [0, t_end] and drives both
/// EM routes at each coarser dt with the exact innovation W sampled at the coarse points.
/// Each dt must be an integer multiple of reference_dt that divides t_end.
ConvergenceStudy strong_convergence(const Spectrum& spectrum, const LuedersBasis& basis,
                                    const ComplexMatrix& hamiltonian, const StateVector& initial_state,
                                    const CouplingSchedule& schedule, double t_end,
                                    std::span<const double> dt_values, double reference_dt, std::size_t paths,
                                    std::uint64_t master_seed, unsigned threads = 0);

}  // namespace reduction
