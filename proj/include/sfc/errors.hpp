#pragma once

#include <stdexcept>
#include <string>

namespace sfc {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration or misuse of an interface (CLI exit code 2).
struct ConfigError : Error {
  using Error::Error;
};

// Shape or dimension mismatch between tensors/grids.
struct ShapeError : ConfigError {
  using ConfigError::ConfigError;
};

// Broken or missing input data (CLI exit code 3).
struct DataError : Error {
  using Error::Error;
};

// Numerical failure: NaN/Inf, degenerate batch, failed gradient check
// (CLI exit code 4).
struct NumericError : Error {
  using Error::Error;
};

// The dense local loss was handed a mask with no positive pairs.
struct EmptyMaskError : NumericError {
  using NumericError::NumericError;
};

}  // namespace sfc
