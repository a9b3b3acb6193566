#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "reduction/exact_solver.hpp"
#include "reduction/rng.hpp"
#include "reduction/sde_integrator.hpp"
#include "test_support.hpp"

using namespace reduction;
using reduction::testing::max_abs_diff;
using reduction::testing::raises;

namespace {

StateVector from_priors(const Spectrum& s) {
    ComplexVector v(static_cast<Eigen::Index>(s.size()));
    for (std::size_t i = 0; i < s.size(); ++i) v(static_cast<Eigen::Index>(i)) = std::sqrt(s.prior(i));
    return StateVector(v);
}

double level_weight(const StateVector& psi, Eigen::Index i) { return std::norm(psi.amplitudes()(i)); }

}  // namespace

TEST(EmStepState, EigenstateOnlyRotatesPhase) {
    const Spectrum s({0.0, 1.7}, {0.5, 0.5});
    const ComplexMatrix h = diagonal_hamiltonian(s);
    ComplexVector v = ComplexVector::Zero(2);
    v(1) = 1.0;
    const double dt = 1e-3;
    const auto next = em_step_state(StateVector(v), h, 1.0, dt, 0.37, {.renormalize_each_step = false});
    EXPECT_EQ(next.amplitudes()(0), Complex(0.0));
    EXPECT_LT(std::abs(next.squared_norm() - 1.0), dt * dt * 1.7 * 1.7);
    const Complex expected = std::exp(Complex(0.0, -1.7 * dt));
    EXPECT_LT(std::abs(next.amplitudes()(1) - expected), dt * dt * 1.7 * 1.7);
}

TEST(EmStepState, NoNoiseNoHamiltonianLeavesStateAlone) {
    const ComplexMatrix h = ComplexMatrix::Zero(3, 3);
    const auto psi = StateVector::normalized(ComplexVector::Constant(3, Complex(0.3, -0.4)));
    const auto next = em_step_state(psi, h, 2.0, 0.01, 0.0);
    EXPECT_LT((next.amplitudes() - psi.amplitudes()).norm(), 1e-15);
}

TEST(EmStepState, AgreesWithPosteriorStepToFirstOrder) {
    const Spectrum s({0.0, 1.0}, {0.5, 0.5});
    const auto psi = from_priors(s);
    const auto next = em_step_state(psi, diagonal_hamiltonian(s), 1.0, 1e-3, 0.03);
    const auto pi = em_step_pi(s.priors(), s, 1.0, 0.03);
    EXPECT_NEAR(pi[1], 0.5075, 1e-15);
    EXPECT_NEAR(level_weight(next, 1), 0.5075, 1e-4);
    EXPECT_NEAR(level_weight(next, 1), pi[1], 1e-4);
}

TEST(EmStepState, DimensionMismatch) {
    const auto psi = StateVector::normalized(ComplexVector::Ones(2));
    EXPECT_TRUE(raises(ErrorKind::dimension, [&] { em_step_state(psi, ComplexMatrix::Identity(3, 3), 1.0, 0.1, 0.0); }));
}

TEST(EmStepPi, OneStepArithmetic) {
    const Spectrum s({0.0, 1.0}, {0.5, 0.5});
    const auto p = em_step_pi(s.priors(), s, 1.0, 0.1);
    EXPECT_NEAR(p[1], 0.525, 1e-15);
    EXPECT_NEAR(p[0], 0.475, 1e-15);
}

TEST(EmStepPi, AbsorbingEigenstate) {
    const Spectrum s({0.0, 1.0}, {0.5, 0.5});
    const std::vector<double> collapsed{1.0, 0.0};
    for (double dW : {-3.0, 0.0, 0.2, 5.0}) EXPECT_EQ(em_step_pi(collapsed, s, 1.0, dW), collapsed);
}

TEST(EmStepPi, ClipsLargeIncrements) {
    const Spectrum s({0.0, 1.0}, {0.5, 0.5});
    const auto p = em_step_pi(s.priors(), s, 1.0, 10.0);
    EXPECT_EQ(p[0], 0.0);
    EXPECT_EQ(p[1], 1.0);
}

TEST(Density, ValidationAndPure) {
    ComplexMatrix bad = ComplexMatrix::Identity(2, 2);
    EXPECT_TRUE(raises(ErrorKind::validation, [&] { DensityMatrix{bad}; }));
    bad(0, 0) = 0.5;
    bad(1, 1) = 0.5;
    bad(0, 1) = 0.1;
    EXPECT_TRUE(raises(ErrorKind::validation, [&] { DensityMatrix{bad}; }));
    const auto rho = DensityMatrix::pure(StateVector::normalized(ComplexVector::Ones(2)));
    EXPECT_NEAR(rho.trace().real(), 1.0, 1e-15);
    EXPECT_NEAR(rho.min_eigenvalue(), 0.0, 1e-15);
}

TEST(Density, DiagonalInEnergyBasisIsStationary) {
    const Spectrum s({-1.0, 0.0, 2.0}, {0.2, 0.3, 0.5});
    ComplexMatrix m = ComplexMatrix::Zero(3, 3);
    for (int i = 0; i < 3; ++i) m(i, i) = s.prior(static_cast<std::size_t>(i));
    const DensityMatrix rho(m);
    const auto next = density_step(rho, diagonal_hamiltonian(s), 1.5, 0.01);
    EXPECT_LT((next.matrix() - m).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Density, EnergyConservedAndOffDiagonalsDecay) {
    const Spectrum s({0.0, 1.0}, {0.5, 0.5});
    const ComplexMatrix h = diagonal_hamiltonian(s);
    auto rho = DensityMatrix::pure(from_priors(s));
    const double e0 = rho.expectation(h);
    double coherence = std::abs(rho.matrix()(0, 1));
    for (int k = 0; k < 100; ++k) {
        const auto next = density_step(rho, h, 1.0, 0.01);
        EXPECT_NEAR(next.expectation(h), rho.expectation(h), 1e-12);
        EXPECT_LT(std::abs(next.matrix()(0, 1)), coherence);
        coherence = std::abs(next.matrix()(0, 1));
        rho = next;
    }
    EXPECT_NEAR(rho.expectation(h), e0, 1e-12);
    EXPECT_GE(rho.min_eigenvalue(), -1e-12);
}

// Trajectory average of |psi><psi| against the deterministic density evolution.
TEST(Density, MatchesEnsembleOfExactTrajectories) {
    const Spectrum s({0.0, 0.8, 2.0}, {0.3, 0.3, 0.4});
    const auto basis = LuedersBasis::canonical(3);
    const ComplexMatrix h = diagonal_hamiltonian(s);
    const auto sched = CouplingSchedule::constant(1.0);
    const double t = 1.0;
    const auto coarse = TimeGrid::uniform(t, 10);

    const std::size_t n = 4000;
    ComplexMatrix mean = ComplexMatrix::Zero(3, 3);
    Eigen::MatrixXd second = Eigen::MatrixXd::Zero(3, 3);
    for (std::size_t k = 0; k < n; ++k) {
        const auto [path, traj] = run_exact(s, basis, sched, coarse, path_seed(21, k), true);
        const ComplexVector& a = traj.states.back().amplitudes();
        const ComplexMatrix outer = a * a.adjoint();
        mean += outer;
        second += outer.cwiseAbs2();
    }
    mean /= static_cast<double>(n);
    second /= static_cast<double>(n);

    const auto rho = integrate_density(DensityMatrix::pure(from_priors(s)), h, sched, TimeGrid::uniform(t, 4000));
    const ComplexMatrix& final_rho = rho.back().matrix();
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            const double var = std::max(second(r, c) - std::norm(mean(r, c)), 1e-12);
            const double se = std::sqrt(var / static_cast<double>(n));
            EXPECT_LT(std::abs(mean(r, c) - final_rho(r, c)), 5.0 * se) << r << "," << c;
        }
    }
}

TEST(Linearized, PriorsAtTimeZero) {
    const Spectrum s({-1.0, 0.5, 2.0}, {0.2, 0.5, 0.3});
    const auto lin = linearized_solution(s, CouplingSchedule::constant(1.0), 0.0, 0.0);
    EXPECT_LT(max_abs_diff(lin.posteriors, s.priors()), 1e-15);
}

TEST(Linearized, AgreesWithFilterAndTransitionProbabilities) {
    const Spectrum s({-1.0, 0.5, 2.0}, {0.2, 0.5, 0.3});
    const ComplexMatrix h = diagonal_hamiltonian(s);
    const auto psi0 = from_priors(s);
    const auto sched = CouplingSchedule::power_law(1.0, 1.4);
    const auto grid = TimeGrid::uniform(2.0, 80);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto [path, traj] = run_exact(s, sched, grid, seed);
        for (std::size_t j : {std::size_t{1}, std::size_t{40}, std::size_t{80}}) {
            const double I = sched.int_sigma_sq(0.0, grid[j]);
            const auto lin = linearized_solution(s, sched, path.eta[j], grid[j]);
            EXPECT_LT(max_abs_diff(lin.posteriors, traj.posteriors[j]), 1e-12);
            const auto state = linearized_state(h, psi0, path.eta[j], I, grid[j]);
            for (Eigen::Index i = 0; i < 3; ++i) {
                EXPECT_NEAR(level_weight(state, i), traj.posteriors[j][static_cast<std::size_t>(i)], 1e-10);
            }
        }
    }
}

TEST(Linearized, GridOverloadUsesLeftPointSum) {
    const Spectrum s({0.0, 1.0}, {0.4, 0.6});
    const auto sched = CouplingSchedule::exponential_decay(1.0, 0.5);
    const auto grid = TimeGrid::uniform(1.0, 10);
    std::vector<double> xi(grid.size(), 0.0);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0.0, 0.3);
    for (std::size_t j = 1; j < xi.size(); ++j) xi[j] = xi[j - 1] + g(rng);
    double sum = 0.0;
    for (std::size_t j = 0; j < 7; ++j) sum += sched.sigma(grid[j]) * (xi[j + 1] - xi[j]);
    const auto lin = linearized_solution(s, sched, grid, xi, 7);
    EXPECT_NEAR(lin.sigma_dxi, sum, 1e-15);
    const auto direct = linearized_solution(s, sched, sum, grid[7]);
    EXPECT_LT(max_abs_diff(lin.posteriors, direct.posteriors), 1e-15);
    EXPECT_TRUE(raises(ErrorKind::dimension, [&] { linearized_solution(s, sched, grid, xi, 11); }));
}

TEST(Integrate, PosteriorsStayNormalized) {
    const Spectrum s({0.0, 1.0, 2.5}, {0.3, 0.3, 0.4});
    const auto sched = CouplingSchedule::constant(1.0);
    const auto grid = TimeGrid::uniform(5.0, 500);
    const auto path = sample_path(s, sched, grid, 2);
    const auto pis = integrate_posteriors(s, sched, grid, path.B);
    for (const auto& p : pis) {
        EXPECT_NEAR(reduction::testing::sum(p), 1.0, 1e-14);
        for (double x : p) EXPECT_GE(x, 0.0);
    }
    const std::vector<double> short_path(3, 0.0);
    EXPECT_TRUE(raises(ErrorKind::dimension, [&] { integrate_posteriors(s, sched, grid, short_path); }));
}

TEST(Convergence, ErrorShrinksWithStep) {
    const Spectrum s({0.0, 1.0}, {0.3, 0.7});
    const auto basis = LuedersBasis::canonical(2);
    const std::vector<double> dts{1e-1, 1e-2, 1e-3};
    const auto study = strong_convergence(s, basis, diagonal_hamiltonian(s), from_priors(s),
                                          CouplingSchedule::constant(1.0), 1.0, dts, 1e-4, 30, 9, 2);
    ASSERT_EQ(study.levels.size(), 3u);
    for (std::size_t l = 1; l < 3; ++l) {
        EXPECT_LT(study.levels[l].median_error_pi, study.levels[l - 1].median_error_pi);
        EXPECT_LT(study.levels[l].median_error_state, study.levels[l - 1].median_error_state);
    }
    EXPECT_EQ(study.levels[0].path_errors_pi.size(), 30u);
}

TEST(Convergence, ThreadCountDoesNotChangeResults) {
    const Spectrum s({0.0, 1.0}, {0.3, 0.7});
    const auto basis = LuedersBasis::canonical(2);
    const std::vector<double> dts{1e-2};
    const auto run = [&](unsigned threads) {
        return strong_convergence(s, basis, diagonal_hamiltonian(s), from_priors(s), CouplingSchedule::constant(1.0),
                                  0.5, dts, 1e-3, 12, 4, threads);
    };
    const auto a = run(1);
    const auto b = run(4);
    EXPECT_EQ(a.levels[0].path_errors_pi, b.levels[0].path_errors_pi);
    EXPECT_EQ(a.levels[0].path_errors_state, b.levels[0].path_errors_state);
}

TEST(Convergence, RejectsIncommensurateSteps) {
    const Spectrum s({0.0, 1.0}, {0.3, 0.7});
    const std::vector<double> dts{0.15};
    EXPECT_TRUE(raises(ErrorKind::validation, [&] {
        strong_convergence(s, LuedersBasis::canonical(2), diagonal_hamiltonian(s), from_priors(s),
                           CouplingSchedule::constant(1.0), 1.0, dts, 0.1, 2, 1);
    }));
}
