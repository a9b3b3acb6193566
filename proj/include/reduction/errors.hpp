#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace reduction {

/// Failure categories raised by the library. The CLI maps these to exit codes.
enum class ErrorKind {
    validation,
    empty_support,
    dimension,
    domain,
    input,
    index,
    ambiguity,
    regime,
    degenerate_gap,
    config,
};

const char* to_string(ErrorKind kind);

/// Error carrying its category and the module that raised it.
class ReductionError : public std::runtime_error {
public:
    ReductionError(ErrorKind kind, std::string module, const std::string& what);

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& module() const noexcept { return module_; }

private:
    ErrorKind kind_;
    std::string module_;
};

/// Raised when a trajectory has not collapsed far enough to identify its outcome.
class AmbiguityError : public ReductionError {
public:
    AmbiguityError(const std::string& what, std::vector<double> terminal_posteriors);

    const std::vector<double>& terminal_posteriors() const noexcept { return posteriors_; }

private:
    std::vector<double> posteriors_;
};

}  // namespace reduction
