#pragma once

#include <stdexcept>
#include <string>

namespace seqflow {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file contents (bad magic, wrong bit depth, wrong channel count).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Truncated or mis-sized payload.
class LengthError : public Error {
 public:
  using Error::Error;
};

/// Shape mismatch between arguments.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Argument outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent or incomplete configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Metric requested over an empty pixel set.
class MetricError : public Error {
 public:
  using Error::Error;
};

/// Occluders could not be placed without overlap.
class PlacementError : public Error {
 public:
  using Error::Error;
};

}  // namespace seqflow
