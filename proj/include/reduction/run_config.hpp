#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "reduction/coupling.hpp"
#include "reduction/exact_solver.hpp"
#include "reduction/spectrum.hpp"

namespace reduction {

enum class Experiment { trajectory, ensemble, oracle_compare, finite_time, partial_measurement, convergence };

const char* to_string(Experiment experiment);

/// A fully validated run description.
///
/// JSON layout (fields other than spectrum, coupling and grid are optional):
///   experiment   one of trajectory, ensemble, oracle_compare, finite_time, partial_measurement, convergence
///   seed         unsigned integer
///   spectrum     {energies, priors} or {hamiltonian: {real, imag}, initial_state: {real, imag},
///                 degeneracy_tol, prior_floor}
///   coupling     {kind, sigma, alpha, lambda, T, table: [[t, sigma], ...]}
///   grid         {t_end, steps, spacing: uniform | geometric, t_first} or, for finite_time,
///                {horizon_fraction, steps}
///   paths, checkpoints, threads
///   oracle       {n_values, paths}
///   convergence  {dt_values, reference_dt, paths}
///   output       {dir}
struct RunConfig {
    Experiment experiment = Experiment::trajectory;
    std::uint64_t seed = 0;
    Spectrum spectrum;
    LuedersBasis basis;
    ComplexMatrix hamiltonian;
    StateVector initial_state;
    CouplingSchedule coupling;
    TimeGrid grid;
    std::size_t paths = 1000;
    std::size_t checkpoints = 10;
    unsigned threads = 0;
    std::vector<std::size_t> oracle_n{100, 1000, 10000};
    std::size_t oracle_paths = 20;
    std::vector<double> dt_values{1e-2, 1e-3, 1e-4};
    double reference_dt = 1e-5;
    std::size_t convergence_paths = 100;
    std::string output_dir = "out";
};

/// One violated precondition, located by its JSON field path.
struct Diagnostic {
    std::string field;
    std::string message;
};

struct ParseResult {
    std::optional<RunConfig> config;
    std::vector<Diagnostic> diagnostics;
};

/// Checks every section and collects all diagnostics; config is set only when there are none.
ParseResult parse_config(const nlohmann::json& document);

/// parse_config that throws ReductionError(config) listing the diagnostics.
RunConfig load_config(const nlohmann::json& document);

}  // namespace reduction
