#pragma once

#include <stdexcept>
#include <string>

namespace fishloc {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed, missing or out-of-range input (files, parameters, dimensions).
class InputError : public Error {
 public:
  using Error::Error;
};

/// A geometric configuration the solver cannot handle (collinear points, ...).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Iterative inversion did not converge.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// A query outside the domain where a model or map is defined.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Robust pose estimation found no acceptable hypothesis.
class PnPFailure : public Error {
 public:
  using Error::Error;
};

/// Mutual-information refinement could not evaluate any pose.
class MIFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace fishloc
