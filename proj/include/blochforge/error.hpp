#pragma once

#include <stdexcept>
#include <string>

namespace blochforge {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inputs that violate a precondition (mismatched grids, bad sizes, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// An iterative method failed to reach its tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Exact arithmetic left the representable range.
class OverflowError : public Error {
 public:
  using Error::Error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace blochforge
