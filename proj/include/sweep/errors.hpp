#pragma once

#include <stdexcept>
#include <string>

namespace sweep {

// Bad argument to an in-process operation (dimension mismatch, invalid
// parameter range, mixed node sets, non-nested regions, ...).
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Invalid or inconsistent scenario configuration (maps to CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Numerical failure inside a solver (non-PD system, failed factorization).
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Request exceeds a hard resource cap (brute-force enumeration size,
// refinement node budget). Deliberate refusal, not a numerical failure.
class ResourceLimitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operation asked for outside its supported parameter class
// (e.g. closed-form ball oracles away from the Newtonian kernel).
class UnsupportedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace sweep
