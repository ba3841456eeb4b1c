#ifndef TSC_ERRORS_HPP
#define TSC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace tsc {

// Bad arguments or malformed input files. CLI maps this to exit code 2.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure while optimizing (divergence, degenerate feature sums).
// CLI maps this and ContractError to exit code 3.
struct OptimizationError : std::runtime_error {
    explicit OptimizationError(const std::string& msg) : std::runtime_error(msg) {}
};

// A state-machine precondition was violated (e.g. asking for an assignment
// before any center has been observed).
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace tsc

#endif
