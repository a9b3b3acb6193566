#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace reduction {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

/// Distinct energy levels E_1 < ... < E_N with their outcome probabilities.
class Spectrum {
public:
    /// Throws ReductionError(validation) unless energies are strictly
    /// increasing, priors are nonnegative and sum to one within 1e-12.
    Spectrum(std::vector<double> energies, std::vector<double> priors);

    std::size_t size() const noexcept { return energies_.size(); }
    const std::vector<double>& energies() const noexcept { return energies_; }
    const std::vector<double>& priors() const noexcept { return priors_; }
    double energy(std::size_t i) const { return energies_.at(i); }
    double prior(std::size_t i) const { return priors_.at(i); }

    double mean_energy() const;
    double energy_variance() const;
    double spectral_range() const { return energies_.back() - energies_.front(); }
    /// Smallest gap between adjacent levels; zero for a single level.
    double min_gap() const;
    /// Largest energy variance attainable by any state: (E_N - E_1)^2 / 4.
    double max_variance() const;

private:
    std::vector<double> energies_;
    std::vector<double> priors_;
};

/// Unit vector in the system Hilbert space.
class StateVector {
public:
    StateVector() = default;
    /// Throws ReductionError(validation) when the squared norm differs from 1 by more than tol.
    explicit StateVector(ComplexVector amplitudes, double tol = 1e-10);

    /// Rescales to unit norm; throws when the input has zero norm.
    static StateVector normalized(ComplexVector amplitudes);

    const ComplexVector& amplitudes() const noexcept { return amplitudes_; }
    Eigen::Index dimension() const noexcept { return amplitudes_.size(); }
    double squared_norm() const { return amplitudes_.squaredNorm(); }

private:
    ComplexVector amplitudes_;
};

/// Normalized projections of the initial state onto each retained eigenspace.
class LuedersBasis {
public:
    LuedersBasis() = default;
    LuedersBasis(std::vector<ComplexVector> vectors, std::vector<int> projector_ranks, int discarded_rank = 0);

    /// Standard basis e_1..e_n, used when the spectrum is given pre-diagonalized.
    static LuedersBasis canonical(std::size_t n);

    std::size_t size() const noexcept { return vectors_.size(); }
    Eigen::Index dimension() const;
    const ComplexVector& vector(std::size_t i) const { return vectors_.at(i); }
    const std::vector<ComplexVector>& vectors() const noexcept { return vectors_; }
    const std::vector<int>& projector_ranks() const noexcept { return ranks_; }
    /// Total rank of eigenspaces dropped because the initial state has no weight there.
    int discarded_rank() const noexcept { return discarded_rank_; }

    /// Gram matrix of the Lüders vectors.
    ComplexMatrix gram() const;

private:
    std::vector<ComplexVector> vectors_;
    std::vector<int> ranks_;
    int discarded_rank_ = 0;
};

struct DecomposeOptions {
    /// Eigenvalues closer than this merge into one level; negative selects
    /// 1e-9 times the spectral range.
    double degeneracy_tol = -1.0;
    /// Eigenspaces carrying less initial weight than this are removed.
    double prior_floor = 1e-14;
    double hermiticity_tol = 1e-10;
};

struct Decomposition {
    Spectrum spectrum;
    LuedersBasis basis;
};

/// Largest entry of |H - H^dagger|.
double hermiticity_defect(const ComplexMatrix& hamiltonian);

Decomposition decompose(const ComplexMatrix& hamiltonian, const StateVector& initial_state,
                        const DecomposeOptions& options = {});

/// |psi_t> = sum_i exp(-i E_i t) sqrt(pi_it) |phi_i>.
StateVector assemble_state(const Spectrum& spectrum, const LuedersBasis& basis,
                           std::span<const double> posteriors, double t);

/// Hamiltonian matrix diag(E) acting on the canonical basis.
ComplexMatrix diagonal_hamiltonian(const Spectrum& spectrum);

}  // namespace reduction
