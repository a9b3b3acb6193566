#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "reduction/exact_solver.hpp"
#include "reduction/rng.hpp"
#include "test_support.hpp"

using namespace reduction;
using reduction::testing::max_abs_diff;
using reduction::testing::raises;
using reduction::testing::sample_stats;

namespace {

const Spectrum kDesk({0.0, 1.0}, {0.3, 0.7});
const Spectrum kThree({-1.0, 0.5, 2.0}, {0.2, 0.5, 0.3});

// Direct evaluation with no max shift, safe for moderate exponents.
std::vector<double> naive_posterior(const Spectrum& s, double eta, double I) {
    std::vector<double> w(s.size());
    double z = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        w[i] = s.prior(i) * std::exp(s.energy(i) * eta - 0.5 * s.energy(i) * s.energy(i) * I);
        z += w[i];
    }
    for (double& x : w) x /= z;
    return w;
}

}  // namespace

TEST(TimeGrid, Constructors) {
    const auto u = TimeGrid::uniform(2.0, 4);
    ASSERT_EQ(u.size(), 5u);
    EXPECT_DOUBLE_EQ(u[2], 1.0);
    EXPECT_DOUBLE_EQ(u.back(), 2.0);

    const auto f = TimeGrid::finite_horizon(1.0, 10, 1e-6);
    EXPECT_LT(f.back(), 1.0);
    EXPECT_NEAR(f.back(), 1.0 - 1e-6, 1e-15);
    EXPECT_NEAR(f[9], 0.9, 1e-15);

    const auto g = TimeGrid::geometric(0.01, 100.0, 5);
    ASSERT_EQ(g.size(), 6u);
    EXPECT_EQ(g[0], 0.0);
    EXPECT_NEAR(g[1], 0.01, 1e-15);
    EXPECT_NEAR(g[3], 1.0, 1e-12);
    EXPECT_NEAR(g.back(), 100.0, 1e-10);
}

TEST(TimeGrid, Errors) {
    EXPECT_TRUE(raises(ErrorKind::validation, [] { TimeGrid({0.1, 0.2}); }));
    EXPECT_TRUE(raises(ErrorKind::validation, [] { TimeGrid({0.0, 0.2, 0.2}); }));
    EXPECT_TRUE(raises(ErrorKind::validation, [] { TimeGrid::uniform(1.0, 0); }));
    EXPECT_TRUE(raises(ErrorKind::domain,
                       [] { TimeGrid::uniform(1.0, 4).validate_for(CouplingSchedule::finite_time(1.0, 1.0)); }));
}

TEST(Filter, PriorsAtTimeZero) {
    const auto p = filter_posterior(kThree, CouplingSchedule::constant(1.0), 0.0, 0.0);
    EXPECT_EQ(p, kThree.priors());
}

TEST(Filter, SymmetryPoint) {
    const Spectrum s({0.0, 1.0}, {0.5, 0.5});
    const auto p = posterior_from_statistic(s, 0.5, 1.0);
    EXPECT_NEAR(p[0], 0.5, 1e-15);
    EXPECT_NEAR(p[1], 0.5, 1e-15);
}

TEST(Filter, TwoLevelValue) {
    const Spectrum s({0.0, 1.0}, {0.5, 0.5});
    const auto p = filter_posterior(s, CouplingSchedule::constant(1.0), 1.5, 1.0);
    EXPECT_NEAR(p[1], std::numbers::e / (1.0 + std::numbers::e), 1e-15);
    EXPECT_NEAR(p[1], 0.731059, 1e-6);
}

TEST(Filter, MatchesNaiveEvaluation) {
    for (double eta : {-3.0, -0.2, 0.0, 0.9, 4.0}) {
        for (double I : {0.0, 0.1, 1.0, 5.0}) {
            EXPECT_LT(max_abs_diff(posterior_from_statistic(kThree, eta, I), naive_posterior(kThree, eta, I)), 1e-14);
        }
    }
}

TEST(Filter, ExtremeStatisticsStayFinite) {
    const auto p = posterior_from_statistic(kThree, 1e6, 1e5);
    EXPECT_NEAR(reduction::testing::sum(p), 1.0, 1e-15);
    for (double x : p) EXPECT_TRUE(std::isfinite(x));
    EXPECT_TRUE(raises(ErrorKind::input, [] { posterior_from_statistic(kThree, NAN, 1.0); }));
    EXPECT_TRUE(raises(ErrorKind::domain, [] { filter_posterior(kThree, CouplingSchedule::constant(1.0), 0.0, -1.0); }));
}

TEST(Filter, NormalizeLogWeights) {
    const std::vector<double> lw{-INFINITY, 0.0, std::log(3.0)};
    const auto p = normalize_log_weights(lw);
    EXPECT_EQ(p[0], 0.0);
    EXPECT_NEAR(p[1], 0.25, 1e-15);
    EXPECT_NEAR(p[2], 0.75, 1e-15);
    const std::vector<double> none{-INFINITY, -INFINITY};
    EXPECT_TRUE(raises(ErrorKind::input, [&] { normalize_log_weights(none); }));
}

TEST(Moments, Eigenstate) {
    const Spectrum s({0.0, 1.0}, {0.5, 0.5});
    const std::vector<double> p{1.0, 0.0};
    const auto m = energy_and_moments(s, p);
    EXPECT_EQ(m.mean, 0.0);
    EXPECT_EQ(m.variance, 0.0);
    EXPECT_EQ(m.third, 0.0);
}

TEST(Moments, SymmetricTwoLevel) {
    const Spectrum s({0.0, 1.0}, {0.5, 0.5});
    const auto m = energy_and_moments(s, s.priors());
    EXPECT_DOUBLE_EQ(m.mean, 0.5);
    EXPECT_DOUBLE_EQ(m.variance, 0.25);
    EXPECT_NEAR(m.third, 0.0, 1e-16);
}

TEST(Moments, AsymmetricTwoLevelBruteForce) {
    const Spectrum s({0.0, 1.0}, {0.5, 0.5});
    const double p1 = 0.731059;
    const std::vector<double> p{1.0 - p1, p1};  // weight 0.731059 on E = 1, levels listed in ascending order
    const auto m = energy_and_moments(s, p);
    double mean = 0.0;
    for (std::size_t i = 0; i < 2; ++i) mean += p[i] * s.energy(i);
    double v = 0.0;
    double k = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
        v += p[i] * std::pow(s.energy(i) - mean, 2);
        k += p[i] * std::pow(s.energy(i) - mean, 3);
    }
    EXPECT_NEAR(m.mean, 0.731059, 1e-15);
    EXPECT_NEAR(m.variance, v, 1e-15);
    EXPECT_NEAR(m.variance, 0.196612, 1e-6);
    EXPECT_NEAR(m.third, k, 1e-15);
    EXPECT_NEAR(m.third, -0.090858, 1e-6);
}

TEST(EnergyLink, SlopeIsPosteriorVariance) {
    for (double eta : {-1.0, 0.3, 2.0}) {
        const double I = 1.7;
        const double h = 1e-5;
        const double fd = (energy_link(kThree, eta + h, I) - energy_link(kThree, eta - h, I)) / (2 * h);
        const double slope = energy_link_slope(kThree, eta, I);
        EXPECT_NEAR(slope, fd, 1e-8);
        EXPECT_NEAR(slope, energy_and_moments(kThree, posterior_from_statistic(kThree, eta, I)).variance, 1e-14);
        EXPECT_GT(slope, 0.0);
    }
}

TEST(SamplePath, SingleLevelIsDeterministicSignal) {
    const Spectrum one({2.5}, {1.0});
    const auto sched = CouplingSchedule::power_law(1.0, 1.5);
    const auto grid = TimeGrid::uniform(2.0, 50);
    const auto path = sample_path(one, sched, grid, 99);
    EXPECT_EQ(path.outcome_H, 2.5);
    for (std::size_t j = 0; j < grid.size(); ++j) {
        EXPECT_NEAR(path.xi[j], 2.5 * sched.int_sigma(0.0, grid[j]) + path.B[j], 1e-12);
    }
    const auto W = innovation_path(path, std::vector<double>(grid.size(), 2.5), sched);
    for (std::size_t j = 0; j < grid.size(); ++j) EXPECT_NEAR(W[j], path.B[j], 1e-12);
}

TEST(SamplePath, OutcomeFrequenciesFollowPriors) {
    const auto sched = CouplingSchedule::constant(1.0);
    const auto grid = TimeGrid::uniform(1.0, 1);
    const std::size_t n = 100000;
    std::size_t ones = 0;
    for (std::size_t k = 0; k < n; ++k) ones += sample_path(kDesk, sched, grid, path_seed(11, k)).outcome_index;
    const double freq = static_cast<double>(ones) / n;
    EXPECT_NEAR(freq, 0.7, 3.0 * std::sqrt(0.21 / n));
}

TEST(SamplePath, ItoIsometry) {
    const auto sched = CouplingSchedule::exponential_decay(1.5, 0.7);
    const auto grid = TimeGrid::uniform(2.0, 20);
    const std::size_t n = 20000;
    std::vector<double> sq(n);
    std::vector<double> cross(n);
    for (std::size_t k = 0; k < n; ++k) {
        const auto p = sample_path(kDesk, sched, grid, path_seed(12, k));
        sq[k] = p.sigma_dB.back() * p.sigma_dB.back();
        cross[k] = p.sigma_dB.back() * p.B.back();
    }
    const double expected = sched.int_sigma_sq(0.0, 2.0);
    EXPECT_LT(std::abs(sample_stats(sq).mean - expected) / expected, 3.0 / std::sqrt(static_cast<double>(n)));
    const auto c = sample_stats(cross);
    EXPECT_NEAR(c.mean, sched.int_sigma(0.0, 2.0), 3.0 * c.stderr_mean);
}

TEST(SamplePath, ReproducibleFromSeed) {
    const auto sched = CouplingSchedule::constant(1.0);
    const auto grid = TimeGrid::uniform(5.0, 100);
    const auto a = run_exact(kThree, sched, grid, 1234);
    const auto b = run_exact(kThree, sched, grid, 1234);
    EXPECT_EQ(a.first.xi, b.first.xi);
    EXPECT_EQ(a.first.eta, b.first.eta);
    EXPECT_EQ(a.second.posteriors, b.second.posteriors);
    const auto c = run_exact(kThree, sched, grid, 1235);
    EXPECT_NE(a.first.xi, c.first.xi);
}

TEST(SamplePath, GivenOutcomeSharesBrownianDraws) {
    const auto sched = CouplingSchedule::constant(1.0);
    const auto grid = TimeGrid::uniform(1.0, 30);
    const auto free = sample_path(kThree, sched, grid, 77);
    const auto fixed = sample_path_given_outcome(kThree, sched, grid, 77, 2);
    EXPECT_EQ(free.B, fixed.B);
    EXPECT_EQ(fixed.outcome_index, 2u);
    EXPECT_TRUE(raises(ErrorKind::index, [&] { sample_path_given_outcome(kThree, sched, grid, 77, 3); }));
}

TEST(Innovation, IsBrownianUnderTheEnsemble) {
    const auto sched = CouplingSchedule::constant(2.0);
    const auto grid = TimeGrid::uniform(2.0, 20);
    const double dt = 0.1;
    const std::size_t n = 4000;
    std::vector<double> first;
    std::vector<double> last;
    std::vector<double> terminal;
    std::vector<double> products;
    for (std::size_t k = 0; k < n; ++k) {
        const auto [path, traj] = run_exact(kDesk, sched, grid, path_seed(13, k));
        const auto& W = traj.innovation;
        first.push_back(W[1] - W[0]);
        last.push_back(W[20] - W[19]);
        terminal.push_back(W.back());
        for (std::size_t j = 1; j + 1 < W.size(); ++j) products.push_back((W[j] - W[j - 1]) * (W[j + 1] - W[j]));
    }
    for (const auto* v : {&first, &last}) {
        const auto s = sample_stats(*v);
        EXPECT_NEAR(s.mean, 0.0, 3.0 * s.stderr_mean);
        EXPECT_NEAR(s.variance, dt, 3.0 * dt * std::sqrt(2.0 / (n - 1)));
    }
    const auto t = sample_stats(terminal);
    EXPECT_NEAR(t.variance, 2.0, 3.0 * 2.0 * std::sqrt(2.0 / (n - 1)));
    // Lag-1 covariance of increments normalized by dt^2 behaves like a unit-variance product.
    const auto p = sample_stats(products);
    EXPECT_NEAR(p.mean / (dt * dt), 0.0, 3.0 * p.stderr_mean / (dt * dt));
}

TEST(Innovation, InverseRecoversInformation) {
    const auto sched = CouplingSchedule::power_law(1.2, 1.3);
    const auto grid = TimeGrid::uniform(3.0, 300);
    const auto [path, traj] = run_exact(kThree, sched, grid, 5);
    const auto xi = information_from_innovation(traj, sched);
    EXPECT_LT(max_abs_diff(xi, path.xi), 1e-12);
}

TEST(RunExact, InitialPointAndNormalization) {
    const auto sched = CouplingSchedule::constant(1.0);
    const auto grid = TimeGrid::uniform(4.0, 200);
    const auto [path, traj] = run_exact(kThree, LuedersBasis::canonical(3), sched, grid, 8, true);
    EXPECT_EQ(traj.posteriors.front(), kThree.priors());
    EXPECT_DOUBLE_EQ(traj.energy.front(), kThree.mean_energy());
    ASSERT_EQ(traj.states.size(), grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) {
        EXPECT_NEAR(reduction::testing::sum(traj.posteriors[j]), 1.0, 1e-14);
        EXPECT_NEAR(traj.states[j].squared_norm(), 1.0, 1e-12);
        for (std::size_t i = 0; i < 3; ++i) {
            EXPECT_NEAR(std::norm(traj.states[j].amplitudes()(static_cast<Eigen::Index>(i))), traj.posteriors[j][i],
                        1e-12);
        }
    }
}

TEST(RunExact, CollapsesUnderLongMeasurement) {
    // int sigma^2 (min gap)^2 = 60 > 40.
    const auto sched = CouplingSchedule::constant(1.0);
    const auto grid = TimeGrid::geometric(0.01, 60.0, 60);
    std::size_t collapsed = 0;
    const std::size_t n = 1000;
    for (std::size_t k = 0; k < n; ++k) {
        const auto [path, traj] = run_exact(kDesk, sched, grid, path_seed(14, k));
        const auto& last = traj.posteriors.back();
        collapsed += (last[0] > 0.999 || last[1] > 0.999);
    }
    EXPECT_GE(collapsed, 990u);
}

TEST(Restart, Identities) {
    const auto sched = CouplingSchedule::power_law(1.0, 1.5);
    const auto grid = TimeGrid::uniform(2.0, 100);
    const auto [path, traj] = run_exact(kThree, sched, grid, 31);
    const std::size_t mid = 50;
    const double s = grid[mid];
    const double t = grid.back();

    const auto same = restart_filter(kThree, sched, traj.posteriors[mid], s, 0.0, s);
    EXPECT_LT(max_abs_diff(same, traj.posteriors[mid]), 1e-15);

    const auto from_zero = restart_filter(kThree, sched, kThree.priors(), 0.0, path.eta.back(), t);
    EXPECT_LT(max_abs_diff(from_zero, filter_posterior(kThree, sched, path.eta.back(), t)), 1e-14);

    const auto restarted = restart_filter(kThree, sched, traj.posteriors[mid], s, path.eta.back() - path.eta[mid], t);
    EXPECT_LT(max_abs_diff(restarted, traj.posteriors.back()), 1e-12);

    EXPECT_TRUE(raises(ErrorKind::domain, [&] { restart_filter(kThree, sched, kThree.priors(), 1.0, 0.0, 0.5); }));
}

TEST(Conditional, MatchesRunExactOnSharedNoise) {
    const auto sched = CouplingSchedule::exponential_decay(2.0, 0.3);
    const auto grid = TimeGrid::uniform(5.0, 250);
    for (std::size_t k = 0; k < kThree.size(); ++k) {
        const auto path = sample_path_given_outcome(kThree, sched, grid, 41 + k, k);
        const auto exact = solve_path(kThree, nullptr, sched, path);
        const auto cond = conditional_solution(kThree, nullptr, sched, grid, k, path.brownian());
        double worst = 0.0;
        for (std::size_t j = 0; j < grid.size(); ++j) {
            worst = std::max(worst, max_abs_diff(exact.posteriors[j], cond.posteriors[j]));
        }
        EXPECT_LT(worst, 1e-12);
    }
}

TEST(Conditional, CollapsesOntoConditioningLevel) {
    // int sigma^2 (min gap)^2 = 100 (min gap)^{-2} with min gap 1.
    const Spectrum s({0.0, 1.0, 2.0}, {0.4, 0.3, 0.3});
    const auto sched = CouplingSchedule::constant(1.0);
    const auto grid = TimeGrid::geometric(0.01, 100.0, 80);
    const std::size_t k = 1;
    std::size_t hits = 0;
    const std::size_t n = 400;
    for (std::size_t m = 0; m < n; ++m) {
        const auto path = sample_path_given_outcome(s, sched, grid, path_seed(15, m), k);
        const auto cond = conditional_solution(s, nullptr, sched, grid, k, path.brownian());
        hits += cond.posteriors.back()[k] > 0.99;
    }
    EXPECT_GE(hits, static_cast<std::size_t>(0.95 * n));
    EXPECT_TRUE(raises(ErrorKind::index, [&] {
        const auto path = sample_path(s, sched, grid, 1);
        conditional_solution(s, nullptr, sched, grid, 3, path.brownian());
    }));
}

TEST(Recover, RoundTrip) {
    const Spectrum s({1.0, 2.0, 3.5}, {0.3, 0.3, 0.4});
    const auto sched = CouplingSchedule::constant(1.0);
    const auto grid = TimeGrid::geometric(0.01, 200.0, 100);
    for (std::size_t k = 0; k < 3; ++k) {
        const auto path = sample_path_given_outcome(s, sched, grid, 500 + k, k);
        const auto traj = solve_path(s, nullptr, sched, path);
        ASSERT_GT(traj.posteriors.back()[k], 0.9999);
        const auto rec = recover_random_data(s, traj, path.xi, sched);
        EXPECT_EQ(rec.outcome_index, k);
        EXPECT_EQ(rec.H, s.energy(k));
        const double bound = std::abs(s.energy(k)) * sched.int_sigma(0.0, grid.back()) * 1e-4;
        EXPECT_LT(max_abs_diff(rec.B, path.B), bound);
    }
}

TEST(Recover, SingleLevelIsExact) {
    const Spectrum one({-0.7}, {1.0});
    const auto sched = CouplingSchedule::constant(1.3);
    const auto grid = TimeGrid::uniform(1.0, 20);
    const auto [path, traj] = run_exact(one, sched, grid, 3);
    const auto rec = recover_random_data(one, traj, path.xi, sched);
    EXPECT_EQ(rec.H, -0.7);
    for (std::size_t j = 0; j < grid.size(); ++j) {
        EXPECT_EQ(rec.B[j], path.xi[j] - (-0.7) * sched.int_sigma(0.0, grid[j]));
    }
}

TEST(Recover, AmbiguousTrajectoryRaises) {
    const auto sched = CouplingSchedule::constant(1.0);
    const auto grid = TimeGrid::uniform(0.01, 2);
    const auto [path, traj] = run_exact(kDesk, sched, grid, 3);
    try {
        recover_random_data(kDesk, traj, path.xi, sched);
        FAIL() << "expected an ambiguity error";
    } catch (const AmbiguityError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ambiguity);
        EXPECT_EQ(e.terminal_posteriors().size(), 2u);
    }
}

TEST(Recover, OutcomeIndependentOfNoise) {
    const auto sched = CouplingSchedule::constant(1.0);
    const auto grid = TimeGrid::geometric(0.01, 150.0, 60);
    const std::size_t n = 2000;
    std::vector<double> h(n);
    std::vector<double> b(n);
    for (std::size_t k = 0; k < n; ++k) {
        const auto [path, traj] = run_exact(kDesk, sched, grid, path_seed(16, k));
        const auto rec = recover_random_data(kDesk, traj, path.xi, sched);
        h[k] = rec.H;
        b[k] = rec.B.back();
    }
    const auto hs = sample_stats(h);
    const auto bs = sample_stats(b);
    double cov = 0.0;
    for (std::size_t k = 0; k < n; ++k) cov += (h[k] - hs.mean) * (b[k] - bs.mean);
    const double corr = cov / (n - 1) / std::sqrt(hs.variance * bs.variance);
    EXPECT_LT(std::abs(corr), 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST(Argmax, FirstMaximum) {
    const std::vector<double> v{0.1, 0.4, 0.4, 0.1};
    EXPECT_EQ(argmax(v), 1u);
}
