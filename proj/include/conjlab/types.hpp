#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace conjlab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A state vector x(t) of a dynamical system.
using State = Eigen::VectorXd;

/// Base class for every error raised by the library. The `kind()` string is
/// stable and ends up in machine-readable error records written by the CLI.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept { return "error"; }
};

/// Invalid arguments: dimension mismatches, bad parameters, out-of-range times.
class InvalidArgument : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "invalid_argument"; }
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config_error"; }
};

/// Numerical failure: blow-up, singular systems, iteration budget exhausted.
class NumericalError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numerical_error"; }
};

/// A trajectory diverged; `step()` is the index of the first offending sample.
class BlowUpError : public NumericalError {
 public:
  BlowUpError(const std::string& what, std::size_t step)
      : NumericalError(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }
  const char* kind() const noexcept override { return "blow_up"; }

 private:
  std::size_t step_;
};

class SingularMatrixError : public NumericalError {
 public:
  using NumericalError::NumericalError;
  const char* kind() const noexcept override { return "singular_matrix"; }
};

/// Condition number above which a square solve is treated as ill-conditioned.
inline constexpr double kIllConditioned = 1e12;

/// 2-norm condition number via singular values; +inf for rank-deficient input.
double condition_number(const Matrix& m);

}  // namespace conjlab
