#pragma once

#include <stdexcept>
#include <string>

namespace tdlab {

/// Base class for every error raised by the library.
///
/// Errors fall into two families that the command-line front end maps onto
/// different exit codes: input/validation problems (exit 1) and numerical
/// failures discovered while computing (exit 2).
class Error : public std::runtime_error {
 public:
  enum class Family { kValidation, kNumerical };

  Error(Family family, const std::string& what) : std::runtime_error(what), family_(family) {}

  Family family() const noexcept { return family_; }

 private:
  Family family_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(Family::kValidation, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(Family::kNumerical, what) {}
};

// Chain construction.
class NotStochastic : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class NotIrreducible : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class Periodic : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DimensionMismatch : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class RankDeficient : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class AssumptionViolated : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class InvalidSchedule : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class InfeasibleQuery : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Malformed configuration document; `what()` carries the line or field path.
class ParseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class SolverFailure : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// An iterate overflowed or became NaN; iterates of online TD(0) are not
/// almost surely bounded, so this is a reportable outcome, not a bug.
class NonFinite : public NumericalError {
 public:
  NonFinite(const std::string& what, long step) : NumericalError(what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

class SeriesDivergence : public NumericalError {
 public:
  using NumericalError::NumericalError;
};
class InsufficientTailData : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace tdlab
