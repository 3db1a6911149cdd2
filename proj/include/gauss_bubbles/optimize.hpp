#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "gauss_bubbles/errors.hpp"
#include "gauss_bubbles/gauss_core.hpp"
#include "gauss_bubbles/partitions.hpp"
#include "gauss_bubbles/perimeter.hpp"

namespace gb {

struct OptimizeConfig {
  int dimension = 2;
  int cells = 3;
  Eigen::VectorXd target;  // a, empty means equal volumes
  Eigen::VectorXd shift;   // w in the moment functional, empty means 0
  CalibrationOptions calibration{2e-5, 0.5, 400};
  int max_iterations = 300;
  int restarts = 4;
  std::uint64_t seed = 0;
  double tolerance = 1e-7;       // objective spread over the simplex
  double step_tolerance = 1e-4;  // simplex diameter
  double initial_step = 0.3;
  std::uint64_t search_samples = 200'000;
  std::uint64_t final_samples = 1'000'000;
  std::uint64_t chunk_size = 10'000;

  /// Throws ConfigError / DomainError; requires d >= m - 1.
  void validate() const;
  Eigen::VectorXd volumes() const;
  Eigen::VectorXd moment_shift() const;
  /// Samples reused by every objective evaluation.
  IntegrationConfig search_config() const;
  /// Fresh samples for the reported values.
  IntegrationConfig final_config() const;
};

struct ScalarEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// M of the moment report; see mc_moments.
ScalarEstimate moment_objective(const AffinePartition& partition, const Eigen::VectorXd& w,
                           const IntegrationConfig& cfg);

struct RestartSummary {
  int restart = 0;
  bool feasible = false;
  int iterations = 0;
  bool converged = false;
  double objective = 0.0;  // search-sample value of the best iterate
  std::string failure;
};

struct OptimizeResult {
  OptimizeResult(AffinePartition best_, AffinePartition reference_)
      : best(std::move(best_)), reference(std::move(reference_)) {}

  AffinePartition best;
  AffinePartition reference;  // calibrated simplicial cones
  double objective = 0.0;     // final-sample value
  double objective_std_error = 0.0;
  double epsilon = 0.0;
  MomentReport moments;
  std::optional<PerimeterReport> perimeter;
  double volume_residual = 0.0;
  Alignment alignment;
  std::vector<RestartSummary> restarts;
  std::vector<TraceRow> trace;
};

/// Maximizes M over directions and offsets with the volumes held at the
/// target by calibration. Throws OptimizationFailure when no restart finds a
/// feasible iterate.
OptimizeResult optimize_propeller(const OptimizeConfig& cfg);

/// Minimizes P + epsilon sqrt(pi/2) M over the same family.
OptimizeResult minimize_penalized_perimeter(const OptimizeConfig& cfg, double epsilon);

enum class Verdict { pass, fail, inconclusive };
std::string to_string(Verdict verdict);

struct StabilityCertificate {
  double epsilon = 0.0;
  double perimeter_reference = 0.0;
  double perimeter_reference_std_error = 0.0;
  double perimeter_candidate = 0.0;
  double perimeter_candidate_std_error = 0.0;
  double moment_reference = 0.0;
  double moment_reference_std_error = 0.0;
  double moment_candidate = 0.0;
  double moment_candidate_std_error = 0.0;
  double margin = 0.0;
  double perimeter_difference_std_error = 0.0;  // paired, common samples
  double std_error = 0.0;
  Verdict verdict = Verdict::inconclusive;
};

/// (P_cand + eps sqrt(pi/2) M_cand) - (P_ref + eps sqrt(pi/2) M_ref).
double certificate_margin(const StabilityCertificate& c);
Verdict certificate_verdict(double margin, double std_error);

/// Throws PreconditionError when the cell counts differ or the volumes differ
/// by more than volume_tolerance.
StabilityCertificate stability_margin(const AffinePartition& reference,
                                      const AffinePartition& candidate, double epsilon,
                                      const Eigen::VectorXd& w, const IntegrationConfig& cfg,
                                      double volume_tolerance = 1e-3);

/// 1e-10 * x^4 for the rotation-minimized symmetric difference x (m = 3, w = 0).
inline double rearrangement_lower_bound(double misalignment) {
  const double sq = misalignment * misalignment;
  return 1e-10 * sq * sq;
}

}  // namespace gb
