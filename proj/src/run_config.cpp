#include "reduction/run_config.hpp"

#include <cmath>
#include <sstream>

#include "reduction/errors.hpp"

namespace reduction {

namespace {
using nlohmann::json;

class Parser {
public:
    std::vector<Diagnostic> diagnostics;

    void report(const std::string& field, const std::string& message) { diagnostics.push_back({field, message}); }

    const json* child(const json& obj, const std::string& key) const {
        if (!obj.is_object()) return nullptr;
        auto it = obj.find(key);
        return it == obj.end() ? nullptr : &*it;
    }

    std::optional<double> number(const json& obj, const std::string& key, const std::string& path, bool required) {
        const json* v = child(obj, key);
        if (!v) {
            if (required) report(path, "missing required number");
            return std::nullopt;
        }
        if (!v->is_number()) {
            report(path, "expected a number");
            return std::nullopt;
        }
        const double x = v->get<double>();
        if (!std::isfinite(x)) {
            report(path, "must be finite");
            return std::nullopt;
        }
        return x;
    }

    std::optional<std::uint64_t> count(const json& obj, const std::string& key, const std::string& path,
                                       bool required) {
        const json* v = child(obj, key);
        if (!v) {
            if (required) report(path, "missing required integer");
            return std::nullopt;
        }
        if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<long long>() < 0)) {
            report(path, "expected a nonnegative integer");
            return std::nullopt;
        }
        return v->get<std::uint64_t>();
    }

    std::optional<std::vector<double>> numbers(const json& v, const std::string& path) {
        if (!v.is_array()) {
            report(path, "expected an array of numbers");
            return std::nullopt;
        }
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number() || !std::isfinite(v[i].get<double>())) {
                report(path + "[" + std::to_string(i) + "]", "expected a finite number");
                return std::nullopt;
            }
            out.push_back(v[i].get<double>());
        }
        return out;
    }

    // Runs a library constructor, turning its error into a diagnostic at `path`.
    template <typename F>
    auto attempt(const std::string& path, F&& f) -> std::optional<decltype(f())> {
        try {
            return f();
        } catch (const ReductionError& e) {
            report(path, e.what());
        }
        return std::nullopt;
    }
};

struct SpectrumPart {
    Spectrum spectrum;
    LuedersBasis basis;
    ComplexMatrix hamiltonian;
    StateVector initial_state;
};

std::optional<ComplexMatrix> read_matrix(Parser& p, const json& node, const std::string& path) {
    const json* re = p.child(node, "real");
    if (!re || !re->is_array() || re->empty()) {
        p.report(path + ".real", "expected a square array of rows");
        return std::nullopt;
    }
    const auto n = static_cast<Eigen::Index>(re->size());
    ComplexMatrix m = ComplexMatrix::Zero(n, n);
    const json* im = p.child(node, "imag");
    for (const auto& [part, src] : {std::pair{0, re}, std::pair{1, im}}) {
        if (!src) continue;
        const std::string sub = path + (part == 0 ? ".real" : ".imag");
        if (!src->is_array() || static_cast<Eigen::Index>(src->size()) != n) {
            p.report(sub, "expected " + std::to_string(n) + " rows");
            return std::nullopt;
        }
        for (Eigen::Index r = 0; r < n; ++r) {
            auto row = p.numbers((*src)[static_cast<std::size_t>(r)], sub + "[" + std::to_string(r) + "]");
            if (!row) return std::nullopt;
            if (static_cast<Eigen::Index>(row->size()) != n) {
                p.report(sub + "[" + std::to_string(r) + "]", "matrix must be square");
                return std::nullopt;
            }
            for (Eigen::Index c = 0; c < n; ++c) {
                if (part == 0) m(r, c).real((*row)[static_cast<std::size_t>(c)]);
                else m(r, c).imag((*row)[static_cast<std::size_t>(c)]);
            }
        }
    }
    return m;
}

std::optional<ComplexVector> read_vector(Parser& p, const json& node, const std::string& path) {
    const json* re = p.child(node, "real");
    if (!re) {
        p.report(path + ".real", "missing state amplitudes");
        return std::nullopt;
    }
    auto real = p.numbers(*re, path + ".real");
    if (!real) return std::nullopt;
    ComplexVector v(static_cast<Eigen::Index>(real->size()));
    for (std::size_t i = 0; i < real->size(); ++i) v(static_cast<Eigen::Index>(i)) = (*real)[i];
    if (const json* im = p.child(node, "imag")) {
        auto imag = p.numbers(*im, path + ".imag");
        if (!imag) return std::nullopt;
        if (imag->size() != real->size()) {
            p.report(path + ".imag", "length differs from the real part");
            return std::nullopt;
        }
        for (std::size_t i = 0; i < imag->size(); ++i) v(static_cast<Eigen::Index>(i)).imag((*imag)[i]);
    }
    return v;
}

std::optional<SpectrumPart> parse_spectrum(Parser& p, const json& doc) {
    const json* node = p.child(doc, "spectrum");
    if (!node || !node->is_object()) {
        p.report("spectrum", "missing spectrum section");
        return std::nullopt;
    }
    if (p.child(*node, "energies")) {
        auto energies = p.numbers((*node)["energies"], "spectrum.energies");
        const json* pr = p.child(*node, "priors");
        if (!pr) p.report("spectrum.priors", "missing priors");
        auto priors = pr ? p.numbers(*pr, "spectrum.priors") : std::nullopt;
        if (!energies || !priors) return std::nullopt;
        if (energies->size() != priors->size()) {
            p.report("spectrum.priors", "length differs from spectrum.energies");
            return std::nullopt;
        }
        double total = 0.0;
        for (double x : *priors) total += x;
        if (std::abs(total - 1.0) > 1e-12) {
            std::ostringstream os;
            os.precision(17);
            os << "priors must sum to 1 (normalization), got " << total;
            p.report("spectrum.priors", os.str());
            return std::nullopt;
        }
        auto spectrum = p.attempt("spectrum", [&] { return Spectrum(*energies, *priors); });
        if (!spectrum) return std::nullopt;
        ComplexVector psi(static_cast<Eigen::Index>(priors->size()));
        for (std::size_t i = 0; i < priors->size(); ++i) psi(static_cast<Eigen::Index>(i)) = std::sqrt((*priors)[i]);
        return SpectrumPart{*spectrum, LuedersBasis::canonical(spectrum->size()), diagonal_hamiltonian(*spectrum),
                            StateVector(psi, 1e-9)};
    }
    if (!p.child(*node, "hamiltonian")) {
        p.report("spectrum", "give either {energies, priors} or {hamiltonian, initial_state}");
        return std::nullopt;
    }
    auto h = read_matrix(p, (*node)["hamiltonian"], "spectrum.hamiltonian");
    const json* st = p.child(*node, "initial_state");
    if (!st) p.report("spectrum.initial_state", "missing initial state");
    auto psi = st ? read_vector(p, *st, "spectrum.initial_state") : std::nullopt;
    if (!h || !psi) return std::nullopt;
    DecomposeOptions opts;
    if (auto tol = p.number(*node, "degeneracy_tol", "spectrum.degeneracy_tol", false)) opts.degeneracy_tol = *tol;
    if (auto floor = p.number(*node, "prior_floor", "spectrum.prior_floor", false)) opts.prior_floor = *floor;
    bool ok = true;
    const double defect = hermiticity_defect(*h);
    if (defect > opts.hermiticity_tol) {
        std::ostringstream os;
        os << "matrix is not Hermitian: max |H - H^dagger| = " << defect;
        p.report("spectrum.hamiltonian", os.str());
        ok = false;
    }
    if (psi->size() != h->rows()) {
        p.report("spectrum.initial_state", "dimension differs from the Hamiltonian");
        ok = false;
    }
    auto state = p.attempt("spectrum.initial_state", [&] { return StateVector(*psi); });
    if (!ok || !state) return std::nullopt;
    auto dec = p.attempt("spectrum", [&] { return decompose(*h, *state, opts); });
    if (!dec) return std::nullopt;
    return SpectrumPart{dec->spectrum, dec->basis, *h, *state};
}

std::optional<CouplingSchedule> parse_coupling(Parser& p, const json& doc) {
    const json* node = p.child(doc, "coupling");
    if (!node || !node->is_object()) {
        p.report("coupling", "missing coupling section");
        return std::nullopt;
    }
    const json* kind = p.child(*node, "kind");
    if (!kind || !kind->is_string()) {
        p.report("coupling.kind", "expected one of constant, power_law, exponential_decay, finite_time, tabulated");
        return std::nullopt;
    }
    const std::string k = kind->get<std::string>();
    if (k == "tabulated") {
        const json* table = p.child(*node, "table");
        if (!table || !table->is_array()) {
            p.report("coupling.table", "expected an array of [t, sigma] pairs");
            return std::nullopt;
        }
        std::vector<std::pair<double, double>> rows;
        for (std::size_t i = 0; i < table->size(); ++i) {
            auto pair = p.numbers((*table)[i], "coupling.table[" + std::to_string(i) + "]");
            if (!pair) return std::nullopt;
            if (pair->size() != 2) {
                p.report("coupling.table[" + std::to_string(i) + "]", "expected [t, sigma]");
                return std::nullopt;
            }
            rows.emplace_back((*pair)[0], (*pair)[1]);
        }
        return p.attempt("coupling.table", [&] { return CouplingSchedule::tabulated(rows); });
    }
    auto sigma = p.number(*node, "sigma", "coupling.sigma", true);
    if (k == "constant") {
        if (!sigma) return std::nullopt;
        return p.attempt("coupling", [&] { return CouplingSchedule::constant(*sigma); });
    }
    if (k == "power_law") {
        auto alpha = p.number(*node, "alpha", "coupling.alpha", true);
        if (!sigma || !alpha) return std::nullopt;
        return p.attempt("coupling", [&] { return CouplingSchedule::power_law(*sigma, *alpha); });
    }
    if (k == "exponential_decay") {
        auto lambda = p.number(*node, "lambda", "coupling.lambda", true);
        if (!sigma || !lambda) return std::nullopt;
        return p.attempt("coupling", [&] { return CouplingSchedule::exponential_decay(*sigma, *lambda); });
    }
    if (k == "finite_time") {
        auto T = p.number(*node, "T", "coupling.T", true);
        if (!sigma || !T) return std::nullopt;
        return p.attempt("coupling", [&] { return CouplingSchedule::finite_time(*sigma, *T); });
    }
    p.report("coupling.kind", "unknown coupling kind '" + k + "'");
    return std::nullopt;
}

std::optional<TimeGrid> parse_grid(Parser& p, const json& doc, const CouplingSchedule* coupling) {
    const json* node = p.child(doc, "grid");
    if (!node || !node->is_object()) {
        p.report("grid", "missing grid section");
        return std::nullopt;
    }
    // Zero marks a missing or invalid step count.
    std::size_t steps = 0;
    if (auto s = p.count(*node, "steps", "grid.steps", true)) {
        if (*s == 0) p.report("grid.steps", "must be at least 1");
        steps = *s;
    }
    const bool finite = coupling && coupling->kind() == CouplingKind::finite_time;
    if (p.child(*node, "horizon_fraction")) {
        auto frac = p.number(*node, "horizon_fraction", "grid.horizon_fraction", true);
        if (!finite) {
            p.report("grid.horizon_fraction", "only valid with a finite_time coupling");
            return std::nullopt;
        }
        if (!frac || steps == 0) return std::nullopt;
        if (!(*frac > 0.0) || !(*frac < 1.0)) {
            p.report("grid.horizon_fraction", "domain: must lie in (0, 1); the grid may not reach T");
            return std::nullopt;
        }
        const double T = *coupling->horizon();
        const double f = *frac;
        const std::size_t n = steps;
        if (f <= 1.0 - 1.0 / static_cast<double>(n)) {
            return p.attempt("grid", [&] { return TimeGrid::uniform(f * T, n); });
        }
        return p.attempt("grid", [&] { return TimeGrid::finite_horizon(T, n, 1.0 - f); });
    }
    auto t_end = p.number(*node, "t_end", "grid.t_end", true);
    if (!t_end || steps == 0) return std::nullopt;
    if (!(*t_end > 0.0)) {
        p.report("grid.t_end", "must be positive");
        return std::nullopt;
    }
    if (finite && *t_end >= *coupling->horizon()) {
        p.report("grid.t_end", "domain: the grid reaches or passes the finite-time horizon T");
        return std::nullopt;
    }
    std::string spacing = "uniform";
    if (const json* s = p.child(*node, "spacing")) {
        if (!s->is_string()) {
            p.report("grid.spacing", "expected uniform or geometric");
            return std::nullopt;
        }
        spacing = s->get<std::string>();
    }
    std::optional<TimeGrid> grid;
    if (spacing == "uniform") {
        grid = p.attempt("grid", [&] { return TimeGrid::uniform(*t_end, steps); });
    } else if (spacing == "geometric") {
        auto first = p.number(*node, "t_first", "grid.t_first", true);
        if (!first) return std::nullopt;
        grid = p.attempt("grid", [&] { return TimeGrid::geometric(*first, *t_end, steps); });
    } else {
        p.report("grid.spacing", "expected uniform or geometric");
        return std::nullopt;
    }
    if (grid && coupling) {
        if (!p.attempt("grid", [&] { grid->validate_for(*coupling); return true; })) return std::nullopt;
    }
    return grid;
}

std::optional<Experiment> parse_experiment(Parser& p, const json& doc) {
    const json* node = p.child(doc, "experiment");
    if (!node) return Experiment::trajectory;
    if (node->is_string()) {
        const std::string name = node->get<std::string>();
        for (Experiment e : {Experiment::trajectory, Experiment::ensemble, Experiment::oracle_compare,
                             Experiment::finite_time, Experiment::partial_measurement, Experiment::convergence}) {
            if (name == to_string(e)) return e;
        }
    }
    p.report("experiment",
             "expected one of trajectory, ensemble, oracle_compare, finite_time, partial_measurement, convergence");
    return std::nullopt;
}
}  // namespace

const char* to_string(Experiment experiment) {
    switch (experiment) {
        case Experiment::trajectory: return "trajectory";
        case Experiment::ensemble: return "ensemble";
        case Experiment::oracle_compare: return "oracle_compare";
        case Experiment::finite_time: return "finite_time";
        case Experiment::partial_measurement: return "partial_measurement";
        case Experiment::convergence: return "convergence";
    }
    return "unknown";
}

ParseResult parse_config(const nlohmann::json& doc) {
    Parser p;
    ParseResult result;
    if (!doc.is_object()) {
        p.report("", "configuration must be a JSON object");
        result.diagnostics = std::move(p.diagnostics);
        return result;
    }
    const auto experiment = parse_experiment(p, doc);
    const auto seed = p.count(doc, "seed", "seed", false);
    const auto spectrum = parse_spectrum(p, doc);
    const auto coupling = parse_coupling(p, doc);
    const auto grid = parse_grid(p, doc, coupling ? &*coupling : nullptr);

    const RunConfig defaults{.spectrum = Spectrum({0.0}, {1.0}),
                             .basis = {},
                             .hamiltonian = {},
                             .initial_state = {},
                             .coupling = CouplingSchedule::constant(1.0),
                             .grid = {}};
    const auto paths = p.count(doc, "paths", "paths", false);
    if (paths && *paths == 0) p.report("paths", "must be at least 1");
    const auto checkpoints = p.count(doc, "checkpoints", "checkpoints", false);
    const auto threads = p.count(doc, "threads", "threads", false);

    std::vector<std::size_t> oracle_n = defaults.oracle_n;
    std::size_t oracle_paths = defaults.oracle_paths;
    if (const json* o = p.child(doc, "oracle")) {
        if (const json* nv = p.child(*o, "n_values")) {
            if (auto v = p.numbers(*nv, "oracle.n_values")) {
                oracle_n.clear();
                for (double x : *v) {
                    if (!(x >= 1.0) || x != std::floor(x)) {
                        p.report("oracle.n_values", "entries must be positive integers");
                        break;
                    }
                    oracle_n.push_back(static_cast<std::size_t>(x));
                }
            }
        }
        if (auto n = p.count(*o, "paths", "oracle.paths", false)) oracle_paths = *n;
    }

    std::vector<double> dt_values = defaults.dt_values;
    double reference_dt = defaults.reference_dt;
    std::size_t conv_paths = defaults.convergence_paths;
    if (const json* c = p.child(doc, "convergence")) {
        if (const json* dv = p.child(*c, "dt_values")) {
            if (auto v = p.numbers(*dv, "convergence.dt_values")) dt_values = *v;
        }
        if (auto r = p.number(*c, "reference_dt", "convergence.reference_dt", false)) reference_dt = *r;
        if (auto n = p.count(*c, "paths", "convergence.paths", false)) conv_paths = *n;
        if (!(reference_dt > 0.0)) p.report("convergence.reference_dt", "must be positive");
        for (double dt : dt_values) {
            if (!(dt >= reference_dt)) p.report("convergence.dt_values", "entries must be at least reference_dt");
        }
    }

    std::string out_dir = defaults.output_dir;
    if (const json* o = p.child(doc, "output")) {
        if (const json* d = p.child(*o, "dir")) {
            if (d->is_string()) out_dir = d->get<std::string>();
            else p.report("output.dir", "expected a string");
        }
    }

    result.diagnostics = std::move(p.diagnostics);
    if (!result.diagnostics.empty() || !experiment || !spectrum || !coupling || !grid) return result;

    result.config = RunConfig{.experiment = *experiment,
                              .seed = seed.value_or(0),
                              .spectrum = spectrum->spectrum,
                              .basis = spectrum->basis,
                              .hamiltonian = spectrum->hamiltonian,
                              .initial_state = spectrum->initial_state,
                              .coupling = *coupling,
                              .grid = *grid,
                              .paths = paths.value_or(defaults.paths),
                              .checkpoints = checkpoints.value_or(defaults.checkpoints),
                              .threads = static_cast<unsigned>(threads.value_or(0)),
                              .oracle_n = oracle_n,
                              .oracle_paths = oracle_paths,
                              .dt_values = dt_values,
                              .reference_dt = reference_dt,
                              .convergence_paths = conv_paths,
                              .output_dir = out_dir};
    return result;
}

RunConfig load_config(const nlohmann::json& document) {
    ParseResult r = parse_config(document);
    if (r.config) return std::move(*r.config);
    std::ostringstream os;
    os << "invalid configuration";
    for (const auto& d : r.diagnostics) os << "\n  " << (d.field.empty() ? "<root>" : d.field) << ": " << d.message;
    throw ReductionError(ErrorKind::config, "cli", os.str());
}

}  // namespace reduction
