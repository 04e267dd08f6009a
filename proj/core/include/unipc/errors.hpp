#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace unipc {

/// Base class for every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the domain of a schedule function (t or lambda).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed argument (zero step count, unsupported k, empty vector).
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Order or size beyond the supported range.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Coefficient system could not be solved (duplicate or zero nodes).
class SingularSystemError : public Error {
 public:
  using Error::Error;
};

/// A step was requested without the history it needs.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration (solver config, order schedule, study file).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf encountered while sampling. Carries the step index.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// Reference solution failed its self-consistency check.
class ReferenceError : public Error {
 public:
  using Error::Error;
};

/// Not enough usable points for an order fit.
class FitError : public Error {
 public:
  using Error::Error;
};

}  // namespace unipc
