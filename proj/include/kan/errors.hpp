#pragma once

#include <stdexcept>
#include <string>

namespace kan {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid construction arguments (grids, shapes, configs of a component).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Input vector or document dimensions do not match the network shape.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A symbolic basis was evaluated at a singular point of its domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values appeared during evaluation or training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data (CSV rows, dataset contents).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A persisted document violates the model schema. The message starts with
/// a JSON pointer to the offending location.
class SchemaError : public Error {
 public:
  SchemaError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Pipeline configuration is invalid (unknown keys, out-of-range values).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An operation that needs a fully symbolic network met SPLINE edges.
class UnsnappedError : public Error {
 public:
  using Error::Error;
};

}  // namespace kan
