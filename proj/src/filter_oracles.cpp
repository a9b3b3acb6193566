#include "reduction/filter_oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "reduction/errors.hpp"
#include "reduction/exact_solver.hpp"
#include "reduction/rng.hpp"

namespace reduction {

namespace {
constexpr const char* kModule = "filter_oracles";
constexpr std::size_t kDenseLimit = 500;

[[noreturn]] void fail(ErrorKind kind, const std::string& what) {
    throw ReductionError(kind, kModule, what);
}

std::vector<double> from_exponents(const Spectrum& spectrum, double linear, double quadratic) {
    std::vector<double> logw(spectrum.size());
    for (std::size_t i = 0; i < logw.size(); ++i) {
        const double e = spectrum.energy(i);
        const double p = spectrum.prior(i);
        logw[i] = (p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity()) + e * linear -
                  0.5 * e * e * quadratic;
    }
    return normalize_log_weights(logw);
}
}  // namespace

DiscretizedPath::DiscretizedPath(double t, std::vector<double> xi_values) : t_(t), xi_(std::move(xi_values)) {
    if (xi_.empty()) fail(ErrorKind::validation, "discretized path needs at least the initial point");
    if (!(t_ > 0.0) || !std::isfinite(t_)) fail(ErrorKind::validation, "discretized path horizon must be positive");
    if (xi_.front() != 0.0) fail(ErrorKind::validation, "discretized path must start at xi = 0");
    for (double x : xi_) {
        if (!std::isfinite(x)) fail(ErrorKind::input, "discretized path contains a non-finite value");
    }
}

DiscretizedPath DiscretizedPath::subsample(double t, std::span<const double> fine_xi, std::size_t stride) {
    if (stride == 0 || fine_xi.empty() || (fine_xi.size() - 1) % stride != 0) {
        fail(ErrorKind::dimension, "stride must divide the fine path's step count");
    }
    std::vector<double> xi;
    xi.reserve((fine_xi.size() - 1) / stride + 1);
    for (std::size_t j = 0; j < fine_xi.size(); j += stride) xi.push_back(fine_xi[j]);
    return DiscretizedPath(t, std::move(xi));
}

std::vector<double> bayes_path_posterior(const Spectrum& spectrum, const CouplingSchedule& schedule,
                                         const DiscretizedPath& path) {
    const std::size_t n = path.steps();
    if (n == 0) return spectrum.priors();
    const double delta = path.delta();
    const auto& xi = path.xi();
    double linear = 0.0;
    double quadratic = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double s = schedule.sigma(path.time(k));
        linear += s * (xi[k + 1] - xi[k]);
        quadratic += s * s * delta;
    }
    return from_exponents(spectrum, linear, quadratic);
}

std::vector<double> bayes_path_posterior_quadratic(const Spectrum& spectrum, const CouplingSchedule& schedule,
                                                   const DiscretizedPath& path) {
    const std::size_t n = path.steps();
    if (n == 0) return spectrum.priors();
    const double delta = path.delta();
    const auto& xi = path.xi();

    // Observations x_k = xi(s_k) and unit-energy mean a_k, k = 1..n (index 0 is the pinned origin).
    std::vector<double> a(n + 1, 0.0);
    for (std::size_t k = 1; k <= n; ++k) a[k] = a[k - 1] + schedule.sigma(path.time(k - 1)) * delta;

    // Tridiagonal inverse covariance: (2, -1) rows with a final diagonal entry of 1, all over Delta.
    auto apply_inverse = [&](const std::vector<double>& x, std::size_t k) {
        if (k == n) return (x[n] - x[n - 1]) / delta;
        return (2.0 * x[k] - x[k - 1] - x[k + 1]) / delta;
    };
    double linear = 0.0;
    double quadratic = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
        linear += a[k] * apply_inverse(xi, k);
        quadratic += a[k] * apply_inverse(a, k);
    }
    return from_exponents(spectrum, linear, quadratic);
}

IncrementObservations IncrementObservations::from_path(const CouplingSchedule& schedule,
                                                       const DiscretizedPath& path, VarianceRule rule) {
    IncrementObservations obs;
    const std::size_t n = path.steps();
    obs.delta = n == 0 ? 0.0 : path.delta();
    obs.y.resize(n);
    obs.v.resize(n);
    const auto& xi = path.xi();
    for (std::size_t k = 0; k < n; ++k) {
        const double a = path.time(k);
        const double s = schedule.sigma(a);
        obs.y[k] = (xi[k + 1] - xi[k]) / s;
        obs.v[k] = rule == VarianceRule::exact ? schedule.int_inv_sigma_sq(a, path.time(k + 1))
                                               : obs.delta / (s * s);
    }
    return obs;
}

void IncrementObservations::validate() const {
    if (y.size() != v.size()) fail(ErrorKind::validation, "increment and variance lengths differ");
    if (!y.empty() && !(delta > 0.0)) fail(ErrorKind::validation, "increment spacing must be positive");
    for (double x : v) {
        if (!(x > 0.0) || !std::isfinite(x)) fail(ErrorKind::validation, "increment variances must be positive");
    }
}

std::vector<double> increment_posterior(const Spectrum& spectrum, const IncrementObservations& observations) {
    observations.validate();
    if (observations.y.empty()) return spectrum.priors();
    const double d = observations.delta;
    double linear = 0.0;
    double quadratic = 0.0;
    for (std::size_t k = 0; k < observations.y.size(); ++k) {
        linear += observations.y[k] / observations.v[k];
        quadratic += 1.0 / observations.v[k];
    }
    return from_exponents(spectrum, d * linear, d * d * quadratic);
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> covariance_check(double t, std::size_t n) {
    if (n == 0 || n > kDenseLimit) fail(ErrorKind::validation, "covariance check needs 1 <= n <= 500");
    if (!(t > 0.0)) fail(ErrorKind::validation, "covariance check horizon must be positive");
    const double delta = t / static_cast<double>(n);
    const auto dim = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd cov(dim, dim);
    for (Eigen::Index k = 0; k < dim; ++k) {
        for (Eigen::Index l = 0; l < dim; ++l) {
            cov(k, l) = static_cast<double>(std::min(k, l) + 1) * delta;
        }
    }
    Eigen::MatrixXd inv = Eigen::MatrixXd::Zero(dim, dim);
    for (Eigen::Index k = 0; k < dim; ++k) {
        inv(k, k) = (k + 1 == dim ? 1.0 : 2.0) / delta;
        if (k + 1 < dim) {
            inv(k, k + 1) = -1.0 / delta;
            inv(k + 1, k) = -1.0 / delta;
        }
    }
    return {std::move(cov), std::move(inv)};
}

OracleComparison compare_oracles(const Spectrum& spectrum, const CouplingSchedule& schedule, double t,
                                 std::span<const std::size_t> n_values, std::size_t path_count,
                                 std::uint64_t master_seed) {
    if (n_values.empty()) fail(ErrorKind::validation, "no oracle resolutions given");
    if (path_count == 0) fail(ErrorKind::validation, "oracle comparison needs at least one path");
    const std::size_t finest = *std::max_element(n_values.begin(), n_values.end());
    for (std::size_t n : n_values) {
        if (n == 0 || finest % n != 0) fail(ErrorKind::validation, "each resolution must divide the finest one");
    }
    const TimeGrid grid = TimeGrid::uniform(t, finest);
    const std::size_t levels = spectrum.size();

    OracleComparison out;
    for (const char* name : {"path_density", "increment"}) {
        for (std::size_t n : n_values) {
            OracleReport r;
            r.oracle = name;
            r.n = n;
            r.per_level_errors.assign(levels, 0.0);
            out.reports.push_back(std::move(r));
        }
    }
    const std::size_t half = n_values.size();

    for (std::size_t p = 0; p < path_count; ++p) {
        const std::uint64_t seed = path_seed(master_seed, p);
        const SamplePath sp = sample_path(spectrum, schedule, grid, seed);
        const std::vector<double> exact = filter_posterior(spectrum, schedule, sp.eta.back(), t);
        for (std::size_t m = 0; m < n_values.size(); ++m) {
            const DiscretizedPath dp = DiscretizedPath::subsample(t, sp.xi, finest / n_values[m]);
            const std::vector<double> pa = bayes_path_posterior(spectrum, schedule, dp);
            const std::vector<double> pb =
                increment_posterior(spectrum, IncrementObservations::from_path(schedule, dp));
            for (auto [report, post] : {std::pair{&out.reports[m], &pa}, std::pair{&out.reports[half + m], &pb}}) {
                double worst = 0.0;
                for (std::size_t i = 0; i < levels; ++i) {
                    const double err = std::abs((*post)[i] - exact[i]);
                    report->per_level_errors[i] = std::max(report->per_level_errors[i], err);
                    worst = std::max(worst, err);
                }
                if (p == 0 || worst > report->max_abs_error) {
                    report->max_abs_error = worst;
                    report->path_seed = seed;
                }
            }
            for (std::size_t i = 0; i < levels; ++i) {
                out.cross_oracle_error = std::max(out.cross_oracle_error, std::abs(pa[i] - pb[i]));
            }
        }
    }
    return out;
}

}  // namespace reduction
