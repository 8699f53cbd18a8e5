#pragma once

#include <stdexcept>
#include <string>

namespace clvsurvey {

/// Process-level outcome classes. The numeric values double as CLI exit codes
/// and as C API status codes.
enum class Status : int {
  ok = 0,
  validation = 2,
  numerical = 3,
  convergence = 4,
  internal = 5,
};

class Error : public std::runtime_error {
 public:
  Error(Status status, const std::string& what) : std::runtime_error(what), status_(status) {}
  Status status() const noexcept { return status_; }

 private:
  Status status_;
};

/// Bad input: malformed files, out-of-range codes, missing paths.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(Status::validation, what) {}
};

/// Non-finite densities, exhausted rejection budgets, NaN during sampling.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(Status::numerical, what) {}
};

class ConvergenceError : public Error {
 public:
  explicit ConvergenceError(const std::string& what) : Error(Status::convergence, what) {}
};

}  // namespace clvsurvey
