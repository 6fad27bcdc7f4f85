#pragma once

#include <stdexcept>
#include <string>

namespace cantor {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed input text (bad JSON, bad CSV, truncated line).
struct ParseError : Error {
  using Error::Error;
};

/// Structurally valid input that violates the documented record schema
/// (missing field, wrong type, wrong array length, out-of-range value).
struct SchemaError : Error {
  using Error::Error;
};

/// Operation needs more data than the input provides (e.g. a transition
/// model over fewer than two symbols).
struct InsufficientDataError : Error {
  using Error::Error;
};

/// Timbre calibration could not be computed (empty sample).
struct CalibrationError : Error {
  using Error::Error;
};

/// A feature codec cannot be produced for this song (e.g. rhythm with
/// tempo 0). The song is simply excluded from that feature's analysis.
struct FeatureUnavailableError : Error {
  using Error::Error;
};

/// Caller violated a documented precondition (bad range, zero variance,
/// reducible matrix, ...).
struct InvalidArgumentError : Error {
  using Error::Error;
};

/// Bad key or value in a config file or synthesis spec.
struct ConfigError : Error {
  using Error::Error;
};

/// Filesystem failure (missing file, unwritable output).
struct IoError : Error {
  using Error::Error;
};

}  // namespace cantor
