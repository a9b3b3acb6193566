#include "reduction/trajectory_io.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <system_error>

#include <unistd.h>

#include "reduction/errors.hpp"

namespace reduction {

namespace {
constexpr const char* kModule = "io";

[[noreturn]] void fail(const std::string& what) { throw ReductionError(ErrorKind::input, kModule, what); }

void trajectory_header(std::ostringstream& os, std::size_t levels) {
    os << "t,xi,eta,B,W,H_t,V_t,kappa_t";
    for (std::size_t i = 1; i <= levels; ++i) os << ",pi_" << i;
    os << '\n';
}

void trajectory_rows(std::ostringstream& os, const Spectrum& spectrum, const SamplePath& path,
                     std::span<const double> innovation, const std::vector<std::vector<double>>& posteriors,
                     const std::string& prefix) {
    for (std::size_t j = 0; j < posteriors.size(); ++j) {
        const Moments m = energy_and_moments(spectrum, posteriors[j]);
        os << prefix << format_number(path.grid[j]) << ',' << format_number(path.xi[j]) << ','
           << format_number(path.eta[j]) << ',' << format_number(path.B[j]) << ','
           << format_number(innovation[j]) << ',' << format_number(m.mean) << ',' << format_number(m.variance)
           << ',' << format_number(m.third);
        for (double p : posteriors[j]) os << ',' << format_number(p);
        os << '\n';
    }
}

nlohmann::json flags_json(const std::vector<Flag>& flags) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& f : flags) out.push_back({{"name", f.name}, {"passed", f.passed}, {"detail", f.detail}});
    return out;
}
}  // namespace

std::string format_number(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) fail("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    std::filesystem::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) fail("write to " + tmp.string() + " failed");
    }
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        fail("cannot rename onto " + path.string());
    }
}

std::string trajectory_csv(const Spectrum& spectrum, const SamplePath& path, const ReductionTrajectory& trajectory) {
    std::ostringstream os;
    trajectory_header(os, spectrum.size());
    trajectory_rows(os, spectrum, path, trajectory.innovation, trajectory.posteriors, "");
    return os.str();
}

std::string sourced_trajectory_csv(const Spectrum& spectrum, const SamplePath& path,
                                   const ReductionTrajectory& exact, const std::vector<SourcedPosteriors>& runs) {
    std::ostringstream os;
    os << "source,";
    trajectory_header(os, spectrum.size());
    for (const auto& run : runs) {
        if (run.posteriors.size() != path.grid.size()) fail("posterior path length differs from the grid");
        trajectory_rows(os, spectrum, path, exact.innovation, run.posteriors, run.source + ",");
    }
    return os.str();
}

std::string curve_csv(const EnsembleReport& report) {
    std::ostringstream os;
    os << "t,mean_V,stderr_V,upper_bound,mean_H,stderr_H\n";
    for (const auto& s : report.curve) {
        os << format_number(s.t) << ',' << format_number(s.mean_V) << ',' << format_number(s.stderr_V) << ','
           << format_number(s.upper_bound) << ',' << format_number(s.mean_H) << ',' << format_number(s.stderr_H)
           << '\n';
    }
    return os.str();
}

std::string ensemble_text(const EnsembleReport& report) {
    std::ostringstream os;
    os << "paths " << report.path_count << "  regime " << to_string(report.regime) << "\n";
    os << std::setprecision(6) << "H0 " << report.H0 << "  V0 " << report.V0 << "  V_max " << report.V_max << "\n\n";
    os << std::left << std::setw(8) << "level" << std::setw(14) << "frequency" << std::setw(14) << "stderr" << "\n";
    for (std::size_t i = 0; i < report.born_frequencies.size(); ++i) {
        os << std::setw(8) << i + 1 << std::setw(14) << report.born_frequencies[i] << std::setw(14)
           << report.born_stderr[i] << "\n";
    }
    os << "\n";
    for (const char* h : {"t", "mean_H", "stderr_H", "mean_V", "stderr_V", "upper_bound"}) os << std::setw(14) << h;
    os << "\n";
    for (const auto& s : report.curve) {
        for (double v : {s.t, s.mean_H, s.stderr_H, s.mean_V, s.stderr_V, s.upper_bound}) os << std::setw(14) << v;
        os << "\n";
    }
    os << "\nterminal mean V " << report.terminal_mean_V << " +- " << report.terminal_stderr_V;
    if (report.lower_bound) os << "  lower bound " << *report.lower_bound;
    os << "\n\n";
    for (const auto& f : report.flags) {
        os << std::setw(26) << f.name << (f.passed ? "PASS  " : "FAIL  ") << f.detail << "\n";
    }
    return os.str();
}

nlohmann::json to_json(const EnsembleReport& report) {
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& s : report.curve) {
        curve.push_back({{"t", s.t},
                         {"mean_H", s.mean_H},
                         {"stderr_H", s.stderr_H},
                         {"mean_V", s.mean_V},
                         {"stderr_V", s.stderr_V},
                         {"upper_bound", s.upper_bound}});
    }
    nlohmann::json out = {{"path_count", report.path_count},
                          {"regime", to_string(report.regime)},
                          {"H0", report.H0},
                          {"V0", report.V0},
                          {"V_max", report.V_max},
                          {"born_frequencies", report.born_frequencies},
                          {"born_stderr", report.born_stderr},
                          {"curve", curve},
                          {"terminal_mean_V", report.terminal_mean_V},
                          {"terminal_stderr_V", report.terminal_stderr_V},
                          {"flags", flags_json(report.flags)},
                          {"all_passed", report.all_passed()}};
    if (report.lower_bound) out["lower_bound"] = *report.lower_bound;
    return out;
}

nlohmann::json to_json(const OracleReport& report) {
    return {{"oracle", report.oracle},
            {"n", report.n},
            {"max_abs_error", report.max_abs_error},
            {"per_level_errors", report.per_level_errors},
            {"path_seed", report.path_seed}};
}

nlohmann::json to_json(const OracleComparison& comparison) {
    nlohmann::json reports = nlohmann::json::array();
    for (const auto& r : comparison.reports) reports.push_back(to_json(r));
    return {{"reports", reports}, {"cross_oracle_error", comparison.cross_oracle_error}};
}

nlohmann::json to_json(const ConvergenceStudy& study) {
    nlohmann::json levels = nlohmann::json::array();
    for (const auto& l : study.levels) {
        levels.push_back(
            {{"dt", l.dt}, {"median_error_pi", l.median_error_pi}, {"median_error_state", l.median_error_state}});
    }
    return {{"t_end", study.t_end}, {"reference_dt", study.reference_dt}, {"paths", study.paths}, {"levels", levels}};
}

nlohmann::json to_json(const FiniteTimeEnsemble& ensemble) {
    nlohmann::json variance = nlohmann::json::array();
    for (const auto& v : ensemble.beta_variance) {
        variance.push_back({{"t", v.t}, {"variance", v.variance}, {"expected", v.expected}, {"tolerance", v.tolerance}});
    }
    return {{"path_count", ensemble.path_count},
            {"max_H_difference", ensemble.max_H_difference},
            {"max_H_difference_exact", ensemble.max_H_difference_exact},
            {"max_reconstruction_error", ensemble.max_reconstruction_error},
            {"max_innovation_difference", ensemble.max_innovation_difference},
            {"max_bridge_identity_error", ensemble.max_bridge_identity_error},
            {"collapsed_fraction", ensemble.collapsed_fraction},
            {"correct_fraction", ensemble.correct_fraction},
            {"pinned_fraction", ensemble.pinned_fraction},
            {"pinning_scale", ensemble.pinning_scale},
            {"beta_variance", variance},
            {"flags", flags_json(ensemble.flags)},
            {"all_passed", ensemble.all_passed()}};
}

nlohmann::json summary_json(const FiniteTimeComparison& comparison) {
    return {{"compare_until", comparison.compare_until},
            {"max_H_difference", comparison.max_H_difference},
            {"max_reconstruction_error", comparison.max_reconstruction_error},
            {"max_innovation_difference", comparison.max_innovation_difference},
            {"max_bridge_identity_error", comparison.max_bridge_identity_error},
            {"max_H_difference_exact", comparison.max_H_difference_exact},
            {"terminal_posterior", comparison.terminal_posterior}};
}

}  // namespace reduction
