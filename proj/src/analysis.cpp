#include "reduction/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "reduction/detail/parallel.hpp"
#include "reduction/errors.hpp"
#include "reduction/rng.hpp"

namespace reduction {

namespace {
constexpr const char* kModule = "analysis";

[[noreturn]] void fail(ErrorKind kind, const std::string& what) {
    throw ReductionError(kind, kModule, what);
}

struct MeanStderr {
    double mean = 0.0;
    double stderr_ = 0.0;
};

MeanStderr mean_stderr(std::span<const double> xs) {
    const auto n = static_cast<double>(xs.size());
    MeanStderr out;
    out.mean = pairwise_sum(xs) / n;
    if (xs.size() < 2) return out;
    std::vector<double> sq(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - out.mean) * (xs[i] - out.mean);
    out.stderr_ = std::sqrt(pairwise_sum(sq) / (n - 1.0) / n);
    return out;
}

std::string format_double(double x) {
    std::ostringstream os;
    os.precision(6);
    os << x;
    return os.str();
}

void require_finite_time(const CouplingSchedule& schedule) {
    if (schedule.kind() != CouplingKind::finite_time) {
        fail(ErrorKind::regime, "bridge transform needs a finite_time coupling");
    }
}

// Standard deviation of the discrete beta at grid[index]: (T - t) sqrt(sum w_j^2 h_j), with the
// step weights of bridge_transform. Tends to sqrt(t (T - t) / T) as the grid is refined.
double discrete_bridge_sd(const TimeGrid& g, double T, std::size_t index) {
    double var = 0.0;
    for (std::size_t j = 0; j < index; ++j) {
        const double h = g[j + 1] - g[j];
        const double w = h / ((T - g[j]) * (T - g[j + 1])) / std::log1p(h / (T - g[j + 1]));
        var += w * w * h;
    }
    return (T - g[index]) * std::sqrt(var);
}
}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double collapse_tail_probability(double omega, double eps, double int_sigma_sq) {
    if (omega == 0.0) fail(ErrorKind::degenerate_gap, "collapse tail probability is undefined for a zero gap");
    if (!(eps > 0.0) || !std::isfinite(eps)) fail(ErrorKind::validation, "threshold eps must be positive");
    if (!(int_sigma_sq >= 0.0)) fail(ErrorKind::validation, "int sigma^2 must be nonnegative");
    if (int_sigma_sq == 0.0) return eps < 1.0 ? 1.0 : 0.0;
    if (std::isinf(int_sigma_sq)) return 0.0;
    // M_t depends on omega only through omega * int sigma dB, which is symmetric in law.
    const double r = std::abs(omega) * std::sqrt(int_sigma_sq);
    return normal_cdf(-(0.5 * r + 2.0 * std::log(eps) / r));
}

double collapse_tail_probability(double omega, double eps, const CouplingSchedule& schedule, double t) {
    return collapse_tail_probability(omega, eps, schedule.int_sigma_sq(0.0, t));
}

double collapse_tail_monte_carlo(double omega, double eps, const CouplingSchedule& schedule, double t,
                                 std::size_t samples, std::uint64_t master_seed) {
    if (samples == 0) fail(ErrorKind::validation, "Monte Carlo needs at least one sample");
    const TimeGrid grid = TimeGrid::uniform(t, 32);
    const GridIntegrals gi = GridIntegrals::compute(schedule, grid);
    const double i_t = gi.cum_sigma_sq.back();
    const double threshold = std::log(eps);
    std::size_t hits = 0;
    for (std::size_t p = 0; p < samples; ++p) {
        PathRng rng(path_seed(master_seed, p));
        double x = 0.0;
        for (double v : gi.step_sigma_sq) x += std::sqrt(v) * rng.normal();
        if (0.5 * omega * x - 0.25 * omega * omega * i_t > threshold) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(samples);
}

double variance_upper_bound(double v0, double int_sigma_sq) {
    if (!(v0 >= 0.0)) fail(ErrorKind::validation, "V0 must be nonnegative");
    if (!(int_sigma_sq >= 0.0)) fail(ErrorKind::validation, "int sigma^2 must be nonnegative");
    if (std::isinf(int_sigma_sq)) return 0.0;
    return 2.0 * v0 / (1.0 + std::sqrt(1.0 + 4.0 * v0 * int_sigma_sq));
}

double variance_upper_bound(double v0, const CouplingSchedule& schedule, double t) {
    return variance_upper_bound(v0, schedule.int_sigma_sq(0.0, t));
}

double variance_lower_bound(double v0, double v_max, double total_int_sigma_sq) {
    if (!(v0 >= 0.0) || !(v_max >= 0.0)) fail(ErrorKind::validation, "variances must be nonnegative");
    if (!(total_int_sigma_sq >= 0.0)) fail(ErrorKind::validation, "int sigma^2 must be nonnegative");
    return std::max(0.0, v0 - v_max * v_max * total_int_sigma_sq);
}

double variance_lower_bound(double v0, double v_max, const CouplingSchedule& schedule) {
    if (classify(schedule).tag != RegimeTag::partial) {
        fail(ErrorKind::regime, "variance lower bound applies only to a partial-measurement coupling");
    }
    return variance_lower_bound(v0, v_max, schedule.total_sigma_sq());
}

double max_energy_variance(const Spectrum& spectrum) { return spectrum.max_variance(); }

double pairwise_sum(std::span<const double> values) {
    if (values.size() <= 8) {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

bool EnsembleReport::all_passed() const {
    return std::all_of(flags.begin(), flags.end(), [](const Flag& f) { return f.passed; });
}

std::vector<std::size_t> default_checkpoints(const TimeGrid& grid, std::size_t count) {
    std::vector<std::size_t> out;
    if (grid.size() < 2 || count == 0) return out;
    const std::size_t last = grid.size() - 1;
    for (std::size_t k = 1; k <= count; ++k) {
        const auto idx = static_cast<std::size_t>(std::llround(static_cast<double>(k * last) / count));
        if (idx > 0 && (out.empty() || idx > out.back())) out.push_back(idx);
    }
    return out;
}

std::vector<std::size_t> default_bridge_checkpoints(const TimeGrid& grid, std::size_t count) {
    if (grid.size() < 3) return {};
    std::vector<double> interior(grid.times().begin(), grid.times().end() - 1);
    return default_checkpoints(TimeGrid(std::move(interior)), count);
}

EnsembleReport ensemble_report(const Spectrum& spectrum, const CouplingSchedule& schedule, const TimeGrid& grid,
                               const EnsembleOptions& options) {
    if (options.path_count < 100) fail(ErrorKind::validation, "ensemble needs at least 100 paths");
    if (grid.size() < 2) fail(ErrorKind::validation, "ensemble grid needs at least one step");
    grid.validate_for(schedule);
    std::vector<std::size_t> checkpoints =
        options.checkpoints.empty() ? default_checkpoints(grid, 10) : options.checkpoints;
    for (std::size_t c : checkpoints) {
        if (c >= grid.size()) fail(ErrorKind::index, "checkpoint index outside the grid");
    }

    const GridIntegrals gi = GridIntegrals::compute(schedule, grid);
    const std::size_t paths = options.path_count;
    const std::size_t levels = spectrum.size();
    const std::size_t cps = checkpoints.size();
    const std::size_t last = grid.size() - 1;

    // Per-path results, indexed by path so that aggregation is independent of scheduling.
    std::vector<std::size_t> outcome(paths);
    std::vector<double> terminal_v(paths);
    std::vector<double> h_at(paths * cps);
    std::vector<double> v_at(paths * cps);

    detail::parallel_for(paths, options.threads, [&](std::size_t p) {
        const SamplePath sp = sample_path(spectrum, schedule, grid, path_seed(options.master_seed, p));
        for (std::size_t c = 0; c < cps; ++c) {
            const std::size_t j = checkpoints[c];
            const Moments m =
                energy_and_moments(spectrum, posterior_from_statistic(spectrum, sp.eta[j], gi.cum_sigma_sq[j]));
            h_at[p * cps + c] = m.mean;
            v_at[p * cps + c] = m.variance;
        }
        const std::vector<double> post = posterior_from_statistic(spectrum, sp.eta[last], gi.cum_sigma_sq[last]);
        outcome[p] = argmax(post);
        terminal_v[p] = energy_and_moments(spectrum, post).variance;
    });

    EnsembleReport r;
    r.path_count = paths;
    r.regime = classify(schedule).tag;
    r.H0 = spectrum.mean_energy();
    r.V0 = spectrum.energy_variance();
    r.V_max = max_energy_variance(spectrum);
    const auto n = static_cast<double>(paths);

    r.born_frequencies.assign(levels, 0.0);
    for (std::size_t k : outcome) r.born_frequencies[k] += 1.0;
    for (std::size_t i = 0; i < levels; ++i) {
        r.born_frequencies[i] /= n;
        const double p = spectrum.prior(i);
        r.born_stderr.push_back(std::sqrt(p * (1.0 - p) / n));
    }

    std::vector<double> column(paths);
    std::vector<std::vector<double>> v_columns(cps);
    for (std::size_t c = 0; c < cps; ++c) {
        CheckpointStats s;
        s.t = grid[checkpoints[c]];
        for (std::size_t p = 0; p < paths; ++p) column[p] = h_at[p * cps + c];
        const MeanStderr h = mean_stderr(column);
        for (std::size_t p = 0; p < paths; ++p) column[p] = v_at[p * cps + c];
        const MeanStderr v = mean_stderr(column);
        v_columns[c] = column;
        s.mean_H = h.mean;
        s.stderr_H = h.stderr_;
        s.mean_V = v.mean;
        s.stderr_V = v.stderr_;
        s.upper_bound = variance_upper_bound(r.V0, gi.cum_sigma_sq[checkpoints[c]]);
        r.curve.push_back(s);
    }
    const MeanStderr tv = mean_stderr(terminal_v);
    r.terminal_mean_V = tv.mean;
    r.terminal_stderr_V = tv.stderr_;

    // Flags: every comparison allows three standard errors.
    if (r.regime != RegimeTag::partial) {
        double worst = 0.0;
        bool ok = true;
        for (std::size_t i = 0; i < levels; ++i) {
            const double dev = std::abs(r.born_frequencies[i] - spectrum.prior(i));
            ok = ok && dev <= 3.0 * r.born_stderr[i] + 1e-15;
            if (r.born_stderr[i] > 0.0) worst = std::max(worst, dev / r.born_stderr[i]);
        }
        r.flags.push_back({"born_frequencies", ok, "max |z| = " + format_double(worst)});
    }
    {
        double worst = 0.0;
        bool ok = true;
        for (const auto& s : r.curve) {
            const double dev = std::abs(s.mean_H - r.H0);
            ok = ok && dev <= 3.0 * s.stderr_H + 1e-12;
            if (s.stderr_H > 0.0) worst = std::max(worst, dev / s.stderr_H);
        }
        r.flags.push_back({"energy_martingale", ok, "max |z| = " + format_double(worst)});
    }
    {
        double worst = -std::numeric_limits<double>::infinity();
        bool ok = true;
        for (const auto& s : r.curve) {
            const double excess = s.mean_V - s.upper_bound;
            ok = ok && excess <= 3.0 * s.stderr_V + 1e-12;
            worst = std::max(worst, excess);
        }
        r.flags.push_back({"variance_upper_bound", ok, "max(mean V - bound) = " + format_double(worst)});
    }
    {
        bool ok = true;
        double worst = 0.0;
        std::vector<double> diff(paths);
        for (std::size_t c = 0; c + 1 < cps; ++c) {
            for (std::size_t p = 0; p < paths; ++p) diff[p] = v_columns[c + 1][p] - v_columns[c][p];
            const MeanStderr d = mean_stderr(diff);
            ok = ok && d.mean <= 3.0 * d.stderr_ + 1e-12;
            worst = std::max(worst, d.mean);
        }
        r.flags.push_back({"variance_nonincreasing", ok, "max mean increase = " + format_double(worst)});
    }
    if (r.regime == RegimeTag::partial) {
        const double lb = variance_lower_bound(r.V0, r.V_max, schedule);
        r.lower_bound = lb;
        r.flags.push_back({"variance_lower_bound", r.terminal_mean_V >= lb - 3.0 * r.terminal_stderr_V,
                           "terminal mean V = " + format_double(r.terminal_mean_V) + ", bound = " +
                               format_double(lb)});
        r.flags.push_back({"incomplete_reduction", r.terminal_mean_V >= 3.0 * r.terminal_stderr_V,
                           "terminal mean V / stderr = " +
                               format_double(r.terminal_mean_V / std::max(r.terminal_stderr_V, 1e-300))});
    }
    return r;
}

BridgePaths bridge_transform(const SamplePath& path, const CouplingSchedule& schedule) {
    require_finite_time(schedule);
    const double T = *schedule.horizon();
    const double sigma = schedule.scale();
    const TimeGrid& g = path.grid;
    g.validate_for(schedule);
    const std::size_t n = g.size();
    if (path.xi.size() != n || path.B.size() != n) fail(ErrorKind::dimension, "sample path length mismatch");

    BridgePaths out;
    out.grid = g;
    out.kernel_integral.assign(n, 0.0);
    out.xi_star.assign(n, 0.0);
    out.beta.assign(n, 0.0);
    out.beta_from_B.assign(n, 0.0);
    out.xi_reconstructed.assign(n, 0.0);

    double kernel_B = 0.0;
    double drift_part = 0.0;  // int_0^t xi*_s / (T - s) ds
    for (std::size_t j = 0; j + 1 < n; ++j) {
        const double a = g[j];
        const double b = g[j + 1];
        const double h = b - a;
        const double log_ratio = std::log1p(h / (T - b));  // int_a^b (T - s)^{-1} ds
        const double kernel_sq = h / ((T - a) * (T - b));  // int_a^b (T - s)^{-2} ds
        const double w = kernel_sq / log_ratio;
        out.kernel_integral[j + 1] = out.kernel_integral[j] + w * (path.xi[j + 1] - path.xi[j]);
        kernel_B += w * (path.B[j + 1] - path.B[j]);

        out.xi_star[j + 1] = (T - b) * out.kernel_integral[j + 1];
        out.beta[j + 1] = out.xi_star[j + 1] - sigma * b * path.outcome_H;
        out.beta_from_B[j + 1] = (T - b) * kernel_B;

        // xi* linear on the step, (T - s)^{-1} integrated exactly.
        const double xa = out.xi_star[j];
        const double xb = out.xi_star[j + 1];
        drift_part += xa * log_ratio + (xb - xa) * ((T - a) * log_ratio - h) / h;
        out.xi_reconstructed[j + 1] = out.xi_star[j + 1] + drift_part;
    }
    return out;
}

FiniteTimeComparison finite_time_equivalence(const Spectrum& spectrum, const SamplePath& path,
                                             const CouplingSchedule& schedule, double compare_fraction) {
    FiniteTimeComparison out;
    out.bridge = bridge_transform(path, schedule);
    const double T = *schedule.horizon();
    const double sigma = schedule.scale();
    const TimeGrid& g = path.grid;
    const std::size_t n = g.size();
    const GridIntegrals gi = GridIntegrals::compute(schedule, g);
    out.compare_until = compare_fraction * T;

    out.H_information.resize(n);
    out.H_bridge.resize(n);
    std::vector<double> logw(spectrum.size());
    for (std::size_t j = 0; j < n; ++j) {
        const double t = g[j];
        const double eta_hat = sigma * T * out.bridge.kernel_integral[j];
        out.H_information[j] = energy_link(spectrum, eta_hat, gi.cum_sigma_sq[j]);

        const double scale = T / (T - t);
        for (std::size_t i = 0; i < spectrum.size(); ++i) {
            const double e = spectrum.energy(i);
            const double p = spectrum.prior(i);
            logw[i] = (p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity()) +
                      scale * (sigma * e * out.bridge.xi_star[j] - 0.5 * sigma * sigma * e * e * t);
        }
        const std::vector<double> post = normalize_log_weights(logw);
        out.H_bridge[j] = energy_and_moments(spectrum, post).mean;
        if (j + 1 == n) out.terminal_posterior = post;
    }

    out.W_information = innovation_path(path, out.H_information, schedule);
    out.W_bridge.assign(n, 0.0);
    double drift = 0.0;
    for (std::size_t j = 0; j + 1 < n; ++j) {
        drift += gi.step_sigma[j] * 0.5 * (out.H_bridge[j] + out.H_bridge[j + 1]);
        out.W_bridge[j + 1] = out.bridge.xi_reconstructed[j + 1] - drift;
    }

    for (std::size_t j = 0; j < n; ++j) {
        out.max_bridge_identity_error =
            std::max(out.max_bridge_identity_error, std::abs(out.bridge.beta[j] - out.bridge.beta_from_B[j]));
        if (g[j] > out.compare_until) continue;
        out.max_H_difference = std::max(out.max_H_difference, std::abs(out.H_information[j] - out.H_bridge[j]));
        const double h_exact = energy_link(spectrum, path.eta[j], gi.cum_sigma_sq[j]);
        out.max_H_difference_exact = std::max(out.max_H_difference_exact, std::abs(h_exact - out.H_bridge[j]));
        out.max_reconstruction_error =
            std::max(out.max_reconstruction_error, std::abs(out.bridge.xi_reconstructed[j] - path.xi[j]));
        out.max_innovation_difference =
            std::max(out.max_innovation_difference, std::abs(out.W_information[j] - out.W_bridge[j]));
    }
    return out;
}

bool FiniteTimeEnsemble::all_passed() const {
    return std::all_of(flags.begin(), flags.end(), [](const Flag& f) { return f.passed; });
}

FiniteTimeEnsemble finite_time_ensemble(const Spectrum& spectrum, const CouplingSchedule& schedule,
                                        const TimeGrid& grid, const EnsembleOptions& options,
                                        double compare_fraction, double h_tolerance) {
    require_finite_time(schedule);
    const std::size_t paths = options.path_count;
    if (paths < 2) fail(ErrorKind::validation, "finite-time ensemble needs at least two paths");
    std::vector<std::size_t> checkpoints =
        options.checkpoints.empty() ? default_bridge_checkpoints(grid, 10) : options.checkpoints;
    for (std::size_t c : checkpoints) {
        if (c >= grid.size()) fail(ErrorKind::index, "checkpoint index outside the grid");
    }
    const double T = *schedule.horizon();
    const std::size_t cps = checkpoints.size();
    const std::size_t last = grid.size() - 1;
    const double pin_scale = discrete_bridge_sd(grid, T, last);

    struct PathResult {
        double h_diff = 0.0, h_exact = 0.0, recon = 0.0, innov = 0.0, identity = 0.0;
        bool collapsed = false, correct = false, pinned = false;
    };
    std::vector<PathResult> results(paths);
    std::vector<double> beta_at(paths * cps);

    detail::parallel_for(paths, options.threads, [&](std::size_t p) {
        const SamplePath sp = sample_path(spectrum, schedule, grid, path_seed(options.master_seed, p));
        const FiniteTimeComparison cmp = finite_time_equivalence(spectrum, sp, schedule, compare_fraction);
        PathResult& r = results[p];
        r.h_diff = cmp.max_H_difference;
        r.h_exact = cmp.max_H_difference_exact;
        r.recon = cmp.max_reconstruction_error;
        r.innov = cmp.max_innovation_difference;
        r.identity = cmp.max_bridge_identity_error;
        const std::size_t k = argmax(cmp.terminal_posterior);
        r.collapsed = cmp.terminal_posterior[k] > 0.999;
        r.correct = k == sp.outcome_index;
        r.pinned = std::abs(cmp.bridge.beta[last]) < 4.0 * pin_scale;
        for (std::size_t c = 0; c < cps; ++c) beta_at[p * cps + c] = cmp.bridge.beta[checkpoints[c]];
    });

    FiniteTimeEnsemble out;
    out.path_count = paths;
    out.pinning_scale = pin_scale;
    std::size_t collapsed = 0, correct = 0, pinned = 0;
    for (const auto& r : results) {
        out.max_H_difference = std::max(out.max_H_difference, r.h_diff);
        out.max_H_difference_exact = std::max(out.max_H_difference_exact, r.h_exact);
        out.max_reconstruction_error = std::max(out.max_reconstruction_error, r.recon);
        out.max_innovation_difference = std::max(out.max_innovation_difference, r.innov);
        out.max_bridge_identity_error = std::max(out.max_bridge_identity_error, r.identity);
        collapsed += r.collapsed;
        correct += r.correct;
        pinned += r.pinned;
    }
    const auto n = static_cast<double>(paths);
    out.collapsed_fraction = static_cast<double>(collapsed) / n;
    out.correct_fraction = static_cast<double>(correct) / n;
    out.pinned_fraction = static_cast<double>(pinned) / n;

    bool variance_ok = true;
    std::vector<double> column(paths);
    for (std::size_t c = 0; c < cps; ++c) {
        for (std::size_t p = 0; p < paths; ++p) column[p] = beta_at[p * cps + c];
        const MeanStderr ms = mean_stderr(column);
        BridgeVarianceStat st;
        st.t = grid[checkpoints[c]];
        st.variance = ms.stderr_ * ms.stderr_ * n;
        st.expected = st.t * (T - st.t) / T;
        st.tolerance = 3.0 * st.expected * std::sqrt(2.0 / (n - 1.0));
        variance_ok = variance_ok && std::abs(st.variance - st.expected) <= st.tolerance + 1e-12;
        out.beta_variance.push_back(st);
    }

    out.flags.push_back({"H_forms_agree", out.max_H_difference < h_tolerance,
                         "max |H(info) - H(bridge)| = " + format_double(out.max_H_difference)});
    out.flags.push_back({"terminal_collapse", out.collapsed_fraction >= 0.99,
                         "fraction with max posterior > 0.999 = " + format_double(out.collapsed_fraction)});
    out.flags.push_back({"bridge_pinned", out.pinned_fraction >= 0.99,
                         "fraction with |beta| < 4 sd = " + format_double(out.pinned_fraction) + ", sd " + format_double(pin_scale)});
    out.flags.push_back({"bridge_variance", variance_ok, "Var(beta_t) against t(T - t)/T at checkpoints"});
    out.flags.push_back({"bridge_identity", out.max_bridge_identity_error <= 1e-12,
                         "max |beta - beta(B)| = " + format_double(out.max_bridge_identity_error)});
    return out;
}

}  // namespace reduction
