#pragma once

#include <stdexcept>
#include <string>

namespace nsc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user-supplied configuration (bad sizes, inconsistent options).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data that fails a semantic check (point outside window,
/// overlapping covariate roles, uncovered raster cell, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Covariate lookup outside the raster extent or on a nodata cell.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Non-finite or degenerate numeric quantity.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// File could not be read, written or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace nsc
