#pragma once

#include <stdexcept>
#include <string>

namespace nasopt {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents do not agree with what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An object was used in the wrong lifecycle state (e.g. backward twice).
class StateError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed text (genotype strings, instance files, CSV logs).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or unknown identifier.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Request exceeds what the implementation is willing to enumerate.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint or manifest could not be loaded.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// A genotype could not be compiled into a network.
class BuildError : public Error {
 public:
  BuildError(const std::string& what, double penalty)
      : Error(what), penalty_(penalty) {}
  /// Penalty of the rejected genotype (0 when it was rejected for shape reasons).
  double penalty() const noexcept { return penalty_; }

 private:
  double penalty_;
};

}  // namespace nasopt
