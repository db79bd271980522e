#pragma once

#include <stdexcept>
#include <string>

namespace trendlab {

/// Base class for all errors raised by the toolkit.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Shape or extent mismatch between tensors/layers.
struct DimensionError : Error {
  using Error::Error;
};

/// Numeric argument outside the mathematical domain of an operation.
struct DomainError : Error {
  using Error::Error;
};

/// A caller violated a documented precondition.
struct ContractError : Error {
  using Error::Error;
};

/// Malformed input text (CSV rows, cache files, checkpoints).
struct ParseError : Error {
  using Error::Error;
};

/// Structurally valid input with inadmissible content.
struct ValidationError : Error {
  using Error::Error;
};

/// Date calendars of two series cannot be reconciled.
struct AlignmentError : ValidationError {
  using ValidationError::ValidationError;
};

/// Invalid or inconsistent configuration values.
struct ConfigError : Error {
  using Error::Error;
};

/// Filesystem failure while reading or writing artifacts.
struct IoError : Error {
  using Error::Error;
};

/// Training run aborted (non-finite loss or gradients).
struct TrainingError : Error {
  using Error::Error;
};

}  // namespace trendlab
