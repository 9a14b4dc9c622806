#pragma once

#include <stdexcept>
#include <string>

namespace openrdm {

// Exit codes used by the command-line runner.
enum class ExitCode : int {
  ok = 0,
  validation = 2,
  invariant_breach = 3,
  numerical_failure = 4,
};

// Bad input: malformed parameters, config, or files.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// A physical or algebraic invariant was violated during a run.
class InvariantBreach : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// The numerics could not produce a trustworthy answer (collapse, noise floor, ...).
class NumericalFailure : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string &msg) {
  if (!cond)
    throw ValidationError(msg);
}

} // namespace openrdm
