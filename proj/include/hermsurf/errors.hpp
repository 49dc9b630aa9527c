#pragma once
// Error taxonomy shared across the library; the CLI maps these to exit codes.

#include <stdexcept>
#include <string>

namespace hs {

// Malformed or rejected input: parse errors, validation failures (with the
// offending key or grid point named), budget refusals, hypothesis-gated
// requests whose hypothesis fails.  CLI exit code 3.
struct InputError : std::runtime_error {
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// A quantitative check the run was asked to enforce failed (measured value
// vs expectation reported in the message).  CLI exit code 2.
struct CheckError : std::runtime_error {
  explicit CheckError(const std::string& msg) : std::runtime_error(msg) {}
};

// Iterative solver did not converge to the requested tolerance.  No partial
// results are passed off as converged.  CLI exit code 4.
struct SolverError : std::runtime_error {
  explicit SolverError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace hs
