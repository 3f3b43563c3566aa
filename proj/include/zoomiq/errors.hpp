#pragma once

#include <stdexcept>
#include <string>

namespace zoomiq {

// Error taxonomy used across the toolkit. The CLI maps these onto exit codes:
// UsageError -> 1, DataError -> 2, NumericFailure -> 3.

// Broken precondition or shape contract inside the library.
struct ContractViolation : std::logic_error {
    explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

// Non-finite values, invalid math domains, diverged training.
struct NumericFailure : std::runtime_error {
    explicit NumericFailure(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad or unreadable input data (files, manifests, checkpoints).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad command line or configuration document.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace zoomiq
