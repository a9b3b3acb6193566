#include "reduction/errors.hpp"

namespace reduction {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::validation: return "validation";
        case ErrorKind::empty_support: return "empty_support";
        case ErrorKind::dimension: return "dimension";
        case ErrorKind::domain: return "domain";
        case ErrorKind::input: return "input";
        case ErrorKind::index: return "index";
        case ErrorKind::ambiguity: return "ambiguity";
        case ErrorKind::regime: return "regime";
        case ErrorKind::degenerate_gap: return "degenerate_gap";
        case ErrorKind::config: return "config";
    }
    return "unknown";
}

ReductionError::ReductionError(ErrorKind kind, std::string module, const std::string& what)
    : std::runtime_error(module + ": " + what), kind_(kind), module_(std::move(module)) {}

AmbiguityError::AmbiguityError(const std::string& what, std::vector<double> terminal_posteriors)
    : ReductionError(ErrorKind::ambiguity, "exact_solver", what), posteriors_(std::move(terminal_posteriors)) {}

}  // namespace reduction
