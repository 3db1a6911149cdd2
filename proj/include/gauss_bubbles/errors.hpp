#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace gb {

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Arguments inconsistent with each other (dimension or cell-count mismatch).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// A scalar parameter outside the admissible range of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed integration or experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A cell with zero estimated volume where a finite w/a_i is required, or a
/// pair of identical affine functionals.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Geometry the requested estimator cannot handle.
class UnsupportedGeometry : public Error {
 public:
  using Error::Error;
};

/// Preconditions on the inputs of a comparison (e.g. volumes must match).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// Radius below the threshold required by the tail-decay bound.
class HypothesisNotMet : public Error {
 public:
  using Error::Error;
};

/// Monte Carlo error too large relative to the quantity being resolved.
class PrecisionError : public Error {
 public:
  using Error::Error;
};

/// Tables too large to evaluate exactly.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Offset calibration did not reach the target volumes.
class CalibrationFailure : public Error {
 public:
  CalibrationFailure(const std::string& what, Eigen::VectorXd last_offsets,
                     double residual)
      : Error(what), last_offsets_(std::move(last_offsets)), residual_(residual) {}
  const Eigen::VectorXd& last_offsets() const noexcept { return last_offsets_; }
  double residual() const noexcept { return residual_; }

 private:
  Eigen::VectorXd last_offsets_;
  double residual_;
};

/// One optimizer iterate.
struct TraceRow {
  int restart = 0;
  int iteration = 0;
  double objective = 0.0;
  double residual = 0.0;  // max |a_i - target_i| after calibration
};

/// Every optimizer restart failed.
class OptimizationFailure : public Error {
 public:
  OptimizationFailure(const std::string& what, std::vector<TraceRow> trace)
      : Error(what), trace_(std::move(trace)) {}
  const std::vector<TraceRow>& trace() const noexcept { return trace_; }

 private:
  std::vector<TraceRow> trace_;
};

}  // namespace gb
