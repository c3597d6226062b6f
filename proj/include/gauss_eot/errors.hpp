#ifndef GAUSS_EOT_ERRORS_HPP
#define GAUSS_EOT_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gauss_eot {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes disagree (non-square input, mismatched dimensions).
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// A matrix required to be positive definite has an eigenvalue at or below
/// the configured floor, or contains non-finite entries.
class DegenerateMatrix : public Error {
 public:
  using Error::Error;
};

/// Interpolation time outside the admissible interval.
class TOutOfRange : public Error {
 public:
  using Error::Error;
};

/// A coupling's marginals differ from the Gaussians it is paired with.
class MarginalMismatch : public Error {
 public:
  using Error::Error;
};

/// Potentials were solved for a different problem than the one evaluated.
class PotentialMismatch : public Error {
 public:
  using Error::Error;
};

/// Scalar argument outside its domain (e.g. a non-positive regularization).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Grid does not cover enough standard deviations of the measure.
class CoverageError : public Error {
 public:
  using Error::Error;
};

/// Linear-domain Sinkhorn kernel sums vanished or overflowed.
class NumericalUnderflow : public Error {
 public:
  using Error::Error;
};

/// Malformed input file or field.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Trace of an iterative solve.
struct IterationReport {
  int iterations = 0;
  std::vector<double> residuals;
  bool converged = false;
  double final_residual = 0.0;
  /// Smallest eigenvalue of the last iterate, when the iterate is a matrix.
  double min_eigenvalue = 0.0;
};

/// Iteration budget exhausted before the residual reached tolerance.
class NotConverged : public Error {
 public:
  NotConverged(const std::string& what, IterationReport report)
      : Error(what), report_(std::move(report)) {}

  const IterationReport& report() const noexcept { return report_; }

 private:
  IterationReport report_;
};

}  // namespace gauss_eot

#endif  // GAUSS_EOT_ERRORS_HPP
