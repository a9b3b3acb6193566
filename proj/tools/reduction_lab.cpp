// reduction_lab: batch front end for the state-reduction library.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "reduction/analysis.hpp"
#include "reduction/errors.hpp"
#include "reduction/exact_solver.hpp"
#include "reduction/filter_oracles.hpp"
#include "reduction/rng.hpp"
#include "reduction/run_config.hpp"
#include "reduction/sde_integrator.hpp"
#include "reduction/trajectory_io.hpp"

namespace fs = std::filesystem;
using namespace reduction;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<unsigned> threads;
    bool check = false;
};

class ConfigFailure : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigFailure("cannot open config file " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigFailure(path + ": " + e.what());
    }
}

std::optional<std::uint64_t> env_seed() {
    const char* raw = std::getenv("REDUCTION_LAB_SEED");
    if (!raw || !*raw) return std::nullopt;
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(raw, &used, 0);
        if (used != std::string(raw).size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigFailure(std::string("REDUCTION_LAB_SEED is not an unsigned integer: ") + raw);
    }
}

// Seed precedence: --seed, then REDUCTION_LAB_SEED, then the config file.
RunConfig resolve(const Options& opt) {
    RunConfig cfg = load_config(read_json(opt.config_path));
    if (auto s = env_seed()) cfg.seed = *s;
    if (opt.seed) cfg.seed = *opt.seed;
    if (opt.out_dir) cfg.output_dir = *opt.out_dir;
    if (opt.threads) cfg.threads = *opt.threads;
    return cfg;
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

int report_flags(const std::vector<Flag>& flags, bool check) {
    bool ok = true;
    for (const auto& f : flags) {
        std::cout << (f.passed ? "PASS " : "FAIL ") << f.name << "  " << f.detail << "\n";
        ok = ok && f.passed;
    }
    return check && !ok ? kCheckFailed : kOk;
}

std::vector<std::vector<double>> state_posteriors(const LuedersBasis& basis, const std::vector<StateVector>& states) {
    std::vector<std::vector<double>> out;
    out.reserve(states.size());
    for (const auto& s : states) {
        std::vector<double> p(basis.size());
        double total = 0.0;
        for (std::size_t i = 0; i < basis.size(); ++i) {
            p[i] = std::norm(basis.vector(i).dot(s.amplitudes()));
            total += p[i];
        }
        for (double& x : p) x /= total;
        out.push_back(std::move(p));
    }
    return out;
}

int cmd_simulate(const Options& opt) {
    const RunConfig cfg = resolve(opt);
    const std::uint64_t seed = path_seed(cfg.seed, 0);
    auto [path, traj] = run_exact(cfg.spectrum, cfg.basis, cfg.coupling, cfg.grid, seed, true);
    const fs::path dir = cfg.output_dir;
    write_file_atomic(dir / "trajectory.csv", trajectory_csv(cfg.spectrum, path, traj));

    const auto em_pi = integrate_posteriors(cfg.spectrum, cfg.coupling, cfg.grid, traj.innovation);
    const auto em_state = integrate_state(cfg.initial_state, cfg.hamiltonian, cfg.coupling, cfg.grid, traj.innovation);
    write_file_atomic(dir / "trajectory_sde.csv",
                      sourced_trajectory_csv(cfg.spectrum, path, traj,
                                             {{"exact", traj.posteriors},
                                              {"em_state", state_posteriors(cfg.basis, em_state)},
                                              {"em_pi", em_pi}}));

    double norm_err = 0.0;
    double identity_err = 0.0;
    for (std::size_t j = 0; j < traj.size(); ++j) {
        double total = 0.0;
        for (std::size_t i = 0; i < cfg.spectrum.size(); ++i) {
            total += traj.posteriors[j][i];
            const double amp = std::norm(cfg.basis.vector(i).dot(traj.states[j].amplitudes()));
            identity_err = std::max(identity_err, std::abs(amp - traj.posteriors[j][i]));
        }
        norm_err = std::max(norm_err, std::abs(total - 1.0));
    }
    std::cout << "outcome level " << path.outcome_index + 1 << " (E = " << path.outcome_H << "), "
              << "terminal H_t = " << traj.energy.back() << ", V_t = " << traj.variance.back() << "\n";
    return report_flags({{"posterior_normalized", norm_err <= 1e-12, "max |sum pi - 1| = " + format_number(norm_err)},
                         {"transition_probability", identity_err <= 1e-10,
                          "max ||<phi_i|psi_t>|^2 - pi_it| = " + format_number(identity_err)}},
                        opt.check);
}

int cmd_ensemble(const Options& opt) {
    const RunConfig cfg = resolve(opt);
    EnsembleOptions eo;
    eo.path_count = cfg.paths;
    eo.master_seed = cfg.seed;
    eo.threads = cfg.threads;
    eo.checkpoints = default_checkpoints(cfg.grid, cfg.checkpoints);
    const EnsembleReport report = ensemble_report(cfg.spectrum, cfg.coupling, cfg.grid, eo);
    const fs::path dir = cfg.output_dir;
    write_json(dir / "ensemble.json", to_json(report));
    write_file_atomic(dir / "ensemble.txt", ensemble_text(report));
    write_file_atomic(dir / "curve.csv", curve_csv(report));
    std::cout << ensemble_text(report);
    return opt.check && !report.all_passed() ? kCheckFailed : kOk;
}

int cmd_oracle(const Options& opt) {
    const RunConfig cfg = resolve(opt);
    const double t = cfg.grid.back();
    const OracleComparison cmp =
        compare_oracles(cfg.spectrum, cfg.coupling, t, cfg.oracle_n, cfg.oracle_paths, cfg.seed);
    nlohmann::json j = to_json(cmp);
    j["t"] = t;

    std::vector<Flag> flags;
    const std::size_t half = cfg.oracle_n.size();
    for (std::size_t o = 0; o < 2; ++o) {
        bool decreasing = true;
        for (std::size_t m = 1; m < half; ++m) {
            const auto& prev = cmp.reports[o * half + m - 1];
            const auto& cur = cmp.reports[o * half + m];
            if (cur.n > prev.n && !(cur.max_abs_error < prev.max_abs_error)) decreasing = false;
        }
        flags.push_back({cmp.reports[o * half].oracle + "_error_decreasing", decreasing, "max_abs_error over n"});
    }
    if (cfg.coupling.kind() == CouplingKind::constant) {
        flags.push_back({"oracles_agree", cmp.cross_oracle_error <= 1e-12,
                         "max |path_density - increment| = " + format_number(cmp.cross_oracle_error)});
    }
    j["flags"] = nlohmann::json::array();
    for (const auto& f : flags) j["flags"].push_back({{"name", f.name}, {"passed", f.passed}, {"detail", f.detail}});
    write_json(fs::path(cfg.output_dir) / "oracle.json", j);
    for (const auto& r : cmp.reports) {
        std::cout << r.oracle << " n=" << r.n << " max_abs_error=" << format_number(r.max_abs_error) << "\n";
    }
    return report_flags(flags, opt.check);
}

int cmd_finite_time(const Options& opt) {
    const RunConfig cfg = resolve(opt);
    if (cfg.coupling.kind() != CouplingKind::finite_time) {
        throw ReductionError(ErrorKind::config, "cli", "finite-time requires coupling.kind = finite_time");
    }
    EnsembleOptions eo;
    eo.path_count = cfg.paths;
    eo.master_seed = cfg.seed;
    eo.threads = cfg.threads;
    eo.checkpoints = default_bridge_checkpoints(cfg.grid, cfg.checkpoints);
    const FiniteTimeEnsemble ens = finite_time_ensemble(cfg.spectrum, cfg.coupling, cfg.grid, eo);
    write_json(fs::path(cfg.output_dir) / "finite_time.json", to_json(ens));
    return report_flags(ens.flags, opt.check);
}

int cmd_convergence(const Options& opt) {
    const RunConfig cfg = resolve(opt);
    const ConvergenceStudy study =
        strong_convergence(cfg.spectrum, cfg.basis, cfg.hamiltonian, cfg.initial_state, cfg.coupling,
                           cfg.grid.back(), cfg.dt_values, cfg.reference_dt, cfg.convergence_paths, cfg.seed,
                           cfg.threads);
    write_json(fs::path(cfg.output_dir) / "convergence.json", to_json(study));
    bool monotone = true;
    for (std::size_t m = 1; m < study.levels.size(); ++m) {
        const auto& prev = study.levels[m - 1];
        const auto& cur = study.levels[m];
        if (cur.dt < prev.dt && !(cur.median_error_pi < prev.median_error_pi)) monotone = false;
    }
    double finest = study.levels.front().median_error_pi;
    double finest_dt = study.levels.front().dt;
    for (const auto& l : study.levels) {
        std::cout << "dt=" << format_number(l.dt) << " median_error_pi=" << format_number(l.median_error_pi)
                  << " median_error_state=" << format_number(l.median_error_state) << "\n";
        if (l.dt < finest_dt) {
            finest_dt = l.dt;
            finest = l.median_error_pi;
        }
    }
    return report_flags({{"error_decreasing", monotone, "median max-posterior error over dt"},
                         {"finest_below_1e-2", finest < 1e-2, "median error at dt=" + format_number(finest_dt) +
                                                                  ": " + format_number(finest)}},
                        opt.check);
}

int cmd_validate(const Options& opt) {
    const ParseResult r = parse_config(read_json(opt.config_path));
    if (r.diagnostics.empty()) {
        std::cout << "ok\n";
        return kOk;
    }
    for (const auto& d : r.diagnostics) {
        std::cout << (d.field.empty() ? "<root>" : d.field) << ": " << d.message << "\n";
    }
    return kConfigError;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Energy-based state reduction: simulation and verification"};
    app.require_subcommand(1);
    Options opt;

    struct Command {
        const char* name;
        const char* help;
        int (*run)(const Options&);
    };
    const Command commands[] = {
        {"simulate", "one exact trajectory plus Euler-Maruyama runs on the same noise", cmd_simulate},
        {"ensemble", "Born, martingale and variance-bound statistics over many paths", cmd_ensemble},
        {"oracle-compare", "path-density and increment oracles against the exact filter", cmd_oracle},
        {"finite-time", "finite-time collapse and Brownian-bridge equivalence", cmd_finite_time},
        {"convergence", "strong convergence of the Euler-Maruyama routes", cmd_convergence},
        {"validate", "check a configuration without running it", cmd_validate},
    };
    std::vector<std::pair<CLI::App*, const Command*>> subs;
    for (const auto& c : commands) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        sub->add_option("config", opt.config_path, "JSON configuration file")->required();
        if (std::string(c.name) != "validate") {
            sub->add_option("--seed", opt.seed, "master seed (overrides REDUCTION_LAB_SEED and the config)");
            sub->add_option("--out", opt.out_dir, "output directory");
            sub->add_option("--threads", opt.threads, "worker thread cap (0 = all cores)");
            sub->add_flag("--check", opt.check, "exit 1 when any pass/fail flag fails");
        }
        subs.emplace_back(sub, &c);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        for (const auto& [sub, cmd] : subs) {
            if (sub->parsed()) return cmd->run(opt);
        }
    } catch (const ConfigFailure& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const ReductionError& e) {
        if (e.kind() == ErrorKind::config) {
            std::cerr << "config error: " << e.what() << "\n";
            return kConfigError;
        }
        std::cerr << "runtime error [" << to_string(e.kind()) << "] " << e.what() << "\n";
        return kRuntimeError;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return kRuntimeError;
}
