#pragma once

#include <stdexcept>
#include <string>

namespace qce {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GridMismatch : public Error {
 public:
  GridMismatch() : Error("grid mismatch between operands") {}
  explicit GridMismatch(const std::string& what) : Error(what) {}
};

class NonFinite : public Error {
 public:
  explicit NonFinite(const std::string& where) : Error("non-finite value in " + where) {}
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Raised when a quadratic constraint cannot be solved for its auxiliary
/// (x = 0 for a reciprocal, negative radicand for an even root, ...).
class SingularConstraint : public Error {
 public:
  using Error::Error;
};

class SingularLift : public Error {
 public:
  SingularLift(const std::string& what, double condition)
      : Error(what), condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace qce
