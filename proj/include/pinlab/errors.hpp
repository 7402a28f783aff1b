#pragma once

#include <stdexcept>
#include <string>

namespace pinlab {

/// Base of every error raised by the library. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Cell, tuple or grid budget exceeded.
class ResourceError : public Error {
 public:
  using Error::Error;
};

/// Discretization too coarse to resolve a mollifier.
class ResolutionError : public Error {
 public:
  using Error::Error;
};

/// A gridded density leaks mass past the ends of its grid.
class CoverageError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class RegressionMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace pinlab
