#pragma once

#include <stdexcept>
#include <string>

namespace maflow {

// Error taxonomy maps onto the CLI exit codes:
//   InvariantViolation -> 2, numeric failures -> 3, config/IO -> 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// A geometric/structural invariant failed (bad model data, corrupted dump).
struct InvariantViolation : Error {
  using Error::Error;
};

// NaN/Inf encountered; message carries the first offending grid location.
struct NumericError : Error {
  using Error::Error;
};

// g-tilde lost positivity; carries the first failing point and eigenvalue.
struct PositivityError : Error {
  PositivityError(const std::string& msg, std::size_t point, double eig)
      : Error(msg), point_index(point), eigenvalue(eig) {}
  std::size_t point_index;
  double eigenvalue;
};

// Adaptive stepping exhausted its retry budget.
struct BlowupError : Error {
  using Error::Error;
};

}  // namespace maflow
