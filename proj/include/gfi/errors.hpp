#pragma once

#include <stdexcept>
#include <string>

namespace gfi {

// Base for every error raised by the toolkit. The CLI maps InputError-derived
// errors to exit code 1 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user-facing input: shapes, indices, files, records.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent configuration (unknown layer, unknown architecture, bad hyperparameter).
class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

/// A file could not be read or decoded.
class IngestionError : public InputError {
 public:
  using InputError::InputError;
};

/// Binary or text file does not match its documented layout.
class FormatError : public InputError {
 public:
  using InputError::InputError;
};

/// Broken internal contract, e.g. a gradient that was never produced.
class InternalError : public Error {
 public:
  using Error::Error;
};

/// Optimization produced a non-finite value.
class NumericalError : public InternalError {
 public:
  using InternalError::InternalError;
};

}  // namespace gfi
