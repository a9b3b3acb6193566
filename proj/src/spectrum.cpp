#include "reduction/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "reduction/errors.hpp"

namespace reduction {

namespace {
constexpr const char* kModule = "spectrum";

[[noreturn]] void fail(ErrorKind kind, const std::string& what) {
    throw ReductionError(kind, kModule, what);
}
}  // namespace

Spectrum::Spectrum(std::vector<double> energies, std::vector<double> priors)
    : energies_(std::move(energies)), priors_(std::move(priors)) {
    if (energies_.empty()) fail(ErrorKind::validation, "spectrum needs at least one level");
    if (energies_.size() != priors_.size()) {
        fail(ErrorKind::dimension, "energies and priors differ in length");
    }
    for (std::size_t i = 0; i < energies_.size(); ++i) {
        if (!std::isfinite(energies_[i]) || !std::isfinite(priors_[i])) {
            fail(ErrorKind::validation, "non-finite energy or prior");
        }
        if (i > 0 && !(energies_[i] > energies_[i - 1])) {
            fail(ErrorKind::validation, "energies must be strictly increasing");
        }
        if (priors_[i] < 0.0) fail(ErrorKind::validation, "priors must be nonnegative");
    }
    const double total = std::accumulate(priors_.begin(), priors_.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-12) {
        std::ostringstream os;
        os << "priors sum to " << total << ", expected 1";
        fail(ErrorKind::validation, os.str());
    }
}

double Spectrum::mean_energy() const {
    double h = 0.0;
    for (std::size_t i = 0; i < size(); ++i) h += priors_[i] * energies_[i];
    return h;
}

double Spectrum::energy_variance() const {
    const double h = mean_energy();
    double v = 0.0;
    for (std::size_t i = 0; i < size(); ++i) v += priors_[i] * (energies_[i] - h) * (energies_[i] - h);
    return v;
}

double Spectrum::min_gap() const {
    double gap = 0.0;
    for (std::size_t i = 1; i < size(); ++i) {
        const double d = energies_[i] - energies_[i - 1];
        gap = (i == 1) ? d : std::min(gap, d);
    }
    return gap;
}

double Spectrum::max_variance() const {
    const double r = spectral_range();
    return 0.25 * r * r;
}

StateVector::StateVector(ComplexVector amplitudes, double tol) : amplitudes_(std::move(amplitudes)) {
    if (amplitudes_.size() == 0) fail(ErrorKind::validation, "state vector is empty");
    const double n2 = amplitudes_.squaredNorm();
    if (!std::isfinite(n2) || std::abs(n2 - 1.0) > tol) {
        std::ostringstream os;
        os << "state vector squared norm " << n2 << " is not 1";
        fail(ErrorKind::validation, os.str());
    }
}

StateVector StateVector::normalized(ComplexVector amplitudes) {
    const double n = amplitudes.norm();
    if (!(n > 0.0) || !std::isfinite(n)) fail(ErrorKind::validation, "cannot normalize a zero vector");
    amplitudes /= n;
    return StateVector(std::move(amplitudes), 1e-12);
}

LuedersBasis::LuedersBasis(std::vector<ComplexVector> vectors, std::vector<int> projector_ranks,
                           int discarded_rank)
    : vectors_(std::move(vectors)), ranks_(std::move(projector_ranks)), discarded_rank_(discarded_rank) {
    if (vectors_.size() != ranks_.size()) fail(ErrorKind::dimension, "one projector rank per vector");
    for (const auto& v : vectors_) {
        if (v.size() != vectors_.front().size()) fail(ErrorKind::dimension, "Lüders vectors differ in dimension");
    }
}

LuedersBasis LuedersBasis::canonical(std::size_t n) {
    std::vector<ComplexVector> vs;
    vs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        ComplexVector e = ComplexVector::Zero(static_cast<Eigen::Index>(n));
        e(static_cast<Eigen::Index>(i)) = 1.0;
        vs.push_back(std::move(e));
    }
    return LuedersBasis(std::move(vs), std::vector<int>(n, 1));
}

Eigen::Index LuedersBasis::dimension() const {
    return vectors_.empty() ? 0 : vectors_.front().size();
}

ComplexMatrix LuedersBasis::gram() const {
    const auto n = static_cast<Eigen::Index>(vectors_.size());
    ComplexMatrix g(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            g(i, j) = vectors_[static_cast<std::size_t>(i)].dot(vectors_[static_cast<std::size_t>(j)]);
        }
    }
    return g;
}

double hermiticity_defect(const ComplexMatrix& hamiltonian) {
    if (hamiltonian.rows() != hamiltonian.cols()) return INFINITY;
    return (hamiltonian - hamiltonian.adjoint()).cwiseAbs().maxCoeff();
}

Decomposition decompose(const ComplexMatrix& hamiltonian, const StateVector& initial_state,
                        const DecomposeOptions& options) {
    const Eigen::Index d = hamiltonian.rows();
    if (d == 0 || hamiltonian.cols() != d) fail(ErrorKind::dimension, "Hamiltonian must be square and nonempty");
    if (initial_state.dimension() != d) fail(ErrorKind::dimension, "initial state dimension differs from Hamiltonian");
    const double defect = hermiticity_defect(hamiltonian);
    if (!(defect <= options.hermiticity_tol)) {
        std::ostringstream os;
        os << "Hamiltonian is not Hermitian (max |H - H^dagger| = " << defect << ")";
        fail(ErrorKind::validation, os.str());
    }

    // Symmetrize so the eigen-solver sees an exactly Hermitian matrix.
    const ComplexMatrix h = 0.5 * (hamiltonian + hamiltonian.adjoint());
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(h);
    if (solver.info() != Eigen::Success) fail(ErrorKind::validation, "eigen-decomposition failed");
    const Eigen::VectorXd& evals = solver.eigenvalues();
    const ComplexMatrix& evecs = solver.eigenvectors();

    const double range = evals(d - 1) - evals(0);
    const double tol = options.degeneracy_tol >= 0.0 ? options.degeneracy_tol : 1e-9 * range;

    const ComplexVector& psi = initial_state.amplitudes();
    std::vector<double> energies;
    std::vector<double> priors;
    std::vector<ComplexVector> vectors;
    std::vector<int> ranks;
    int discarded = 0;

    Eigen::Index start = 0;
    while (start < d) {
        Eigen::Index stop = start + 1;
        while (stop < d && evals(stop) - evals(stop - 1) <= tol) ++stop;
        const Eigen::Index rank = stop - start;
        const auto block = evecs.middleCols(start, rank);
        const ComplexVector projected = block * (block.adjoint() * psi);
        const double weight = projected.squaredNorm();
        if (weight >= options.prior_floor) {
            energies.push_back(evals.segment(start, rank).mean());
            priors.push_back(weight);
            vectors.push_back(projected / std::sqrt(weight));
            ranks.push_back(static_cast<int>(rank));
        } else {
            discarded += static_cast<int>(rank);
        }
        start = stop;
    }
    if (energies.empty()) fail(ErrorKind::empty_support, "initial state has no weight on any eigenspace");

    const double total = std::accumulate(priors.begin(), priors.end(), 0.0);
    for (auto& p : priors) p /= total;

    return Decomposition{Spectrum(std::move(energies), std::move(priors)),
                         LuedersBasis(std::move(vectors), std::move(ranks), discarded)};
}

StateVector assemble_state(const Spectrum& spectrum, const LuedersBasis& basis,
                           std::span<const double> posteriors, double t) {
    if (posteriors.size() != spectrum.size() || basis.size() != spectrum.size()) {
        fail(ErrorKind::dimension, "posterior length must equal the number of levels");
    }
    ComplexVector psi = ComplexVector::Zero(basis.dimension());
    for (std::size_t i = 0; i < spectrum.size(); ++i) {
        const double p = std::max(posteriors[i], 0.0);
        if (p == 0.0) continue;
        const Complex phase = std::polar(1.0, -spectrum.energy(i) * t);
        psi += (phase * std::sqrt(p)) * basis.vector(i);
    }
    return StateVector(std::move(psi), 1e-10);
}

ComplexMatrix diagonal_hamiltonian(const Spectrum& spectrum) {
    const auto n = static_cast<Eigen::Index>(spectrum.size());
    ComplexMatrix h = ComplexMatrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) h(i, i) = spectrum.energy(static_cast<std::size_t>(i));
    return h;
}

}  // namespace reduction
