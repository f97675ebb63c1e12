#pragma once

#include <stdexcept>
#include <string>

namespace mgs {

// Malformed or truncated files: bad magic, size mismatch, CRC failure.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid or unknown configuration keys/values, bad CLI arguments.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite loss or degenerate optimizer state; carries the iteration it was detected at.
struct TrainingDivergence : std::runtime_error {
    int iteration;
    TrainingDivergence(const std::string& msg, int iter)
        : std::runtime_error(msg + " (iteration " + std::to_string(iter) + ")"), iteration(iter) {}
};

// Inputs outside an operation's domain: zero-norm quaternion, non-positive scale,
// degenerate rotation update.
struct DegenerateInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Caller broke a precondition (dimension mismatch, unsorted index list, ...).
struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

} // namespace mgs
