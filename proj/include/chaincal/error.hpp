#pragma once

#include <stdexcept>
#include <string>

namespace chaincal {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector/matrix sizes that do not agree (joint vectors, packed parameters).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A point handed to the pinhole model lies on or behind the image plane.
class BehindCameraError : public Error {
 public:
  using Error::Error;
};

/// Degenerate geometry such as a non-positive eye-to-hand distance.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Malformed model, dataset or report file. The message carries the location.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// File format version that this build does not understand.
class UnsupportedVersionError : public ParseError {
 public:
  using ParseError::ParseError;
};

/// Invalid experiment configuration, mask selection or combo name.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A requested observation is absent from a pose sample.
class MissingObservationError : public Error {
 public:
  using Error::Error;
};

/// The solver could not even start (e.g. non-finite residual at the initial guess).
class SolverError : public Error {
 public:
  using Error::Error;
};

/// Dataset generation exhausted its retry budget.
class GenerationError : public Error {
 public:
  using Error::Error;
};

}  // namespace chaincal
