#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "reduction/analysis.hpp"
#include "reduction/exact_solver.hpp"
#include "reduction/filter_oracles.hpp"
#include "reduction/sde_integrator.hpp"

namespace reduction {

/// printf "%.17g": round-trips every double.
std::string format_number(double x);

/// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Columns t,xi,eta,B,W,H_t,V_t,kappa_t,pi_1..pi_N.
std::string trajectory_csv(const Spectrum& spectrum, const SamplePath& path, const ReductionTrajectory& trajectory);

/// Posterior paths from different solvers over one shared sample path.
struct SourcedPosteriors {
    std::string source;  ///< exact | em_state | em_pi
    std::vector<std::vector<double>> posteriors;
};

/// The trajectory columns preceded by `source`; xi, eta, B and W come from the shared path.
std::string sourced_trajectory_csv(const Spectrum& spectrum, const SamplePath& path,
                                   const ReductionTrajectory& exact, const std::vector<SourcedPosteriors>& runs);

/// Columns t,mean_V,stderr_V,upper_bound,mean_H,stderr_H.
std::string curve_csv(const EnsembleReport& report);

/// Aligned-column summary of an ensemble report.
std::string ensemble_text(const EnsembleReport& report);

nlohmann::json to_json(const EnsembleReport& report);
nlohmann::json to_json(const OracleReport& report);
nlohmann::json to_json(const OracleComparison& comparison);
nlohmann::json to_json(const ConvergenceStudy& study);
/// Scalar summary of a finite-time comparison (no per-point arrays).
nlohmann::json to_json(const FiniteTimeEnsemble& ensemble);
nlohmann::json summary_json(const FiniteTimeComparison& comparison);

}  // namespace reduction
