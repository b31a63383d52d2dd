#pragma once

#include <stdexcept>
#include <string>

namespace lich {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition or invariant on the inputs was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Two fields living on different grids were combined.
class GridMismatch : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// The operator (Laplacian + c) is not positive definite.
class NonCoercive : public Error {
 public:
  using Error::Error;
};

/// An iterative method exhausted its budget.
class ConvergenceFailure : public Error {
 public:
  using Error::Error;
};

/// The linearized operator could not be inverted (fold signature).
class SingularJacobian : public ConvergenceFailure {
 public:
  using ConvergenceFailure::ConvergenceFailure;
};

/// A field that must be strictly positive was not.
class PositivityError : public Error {
 public:
  using Error::Error;
};

/// The monotone iterate sequence decreased somewhere.
class MonotonicityViolation : public Error {
 public:
  using Error::Error;
};

/// Concentration at a point where f is not positive.
class StructuralViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace lich
