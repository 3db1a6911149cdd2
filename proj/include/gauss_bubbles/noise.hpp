#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gauss_bubbles/gauss_core.hpp"
#include "gauss_bubbles/partitions.hpp"

namespace gb {

/// P((X, Y) in Omega_i x Omega_i) for rho-correlated standard Gaussians.
struct NoiseStabilityReport {
  double rho = 0.0;
  Eigen::VectorXd per_cell;
  Eigen::VectorXd per_cell_std_error;
  double total = 0.0;
  double total_std_error = 0.0;
  std::uint64_t sample_count = 0;
  std::uint64_t seed = 0;
};

NoiseStabilityReport noise_stability_partition(const CellMap& map, double rho,
                                               const IntegrationConfig& cfg);
inline NoiseStabilityReport noise_stability_partition(const AffinePartition& partition, double rho,
                                                      const IntegrationConfig& cfg) {
  return noise_stability_partition(partition.cell_map(), rho, cfg);
}

struct NoiseLimitRow {
  double rho = 0.0;
  double normalized_deficit = 0.0;  // sqrt(2 pi) / arccos(rho) * deficit
  double std_error = 0.0;
};

struct NoiseLimitEstimate {
  double perimeter = 0.0;  // intercept of the linear fit in sqrt(1 - rho^2)
  double std_error = 0.0;
  std::vector<NoiseLimitRow> table;
};

/// Perimeter of a partition from the rho -> 1 limit of its noise-stability
/// deficit. Each interface borders two cells, so the summed cell deficits
/// P(cell(X) != cell(Y)) are halved. The schedule must be increasing inside
/// (0, 1) with at least three values and maximum >= 0.99. Throws
/// PrecisionError when the standard error at the largest rho exceeds 20% of
/// the deficit there.
NoiseLimitEstimate perimeter_from_noise_limit(const CellMap& map, std::span<const double> rhos,
                                              const IntegrationConfig& cfg);

/// Same for the single set given by cell `cell` of the map:
/// deficit = gamma(Omega) - P(X in Omega, Y in Omega).
NoiseLimitEstimate set_perimeter_from_noise_limit(const CellMap& map, int cell,
                                                  std::span<const double> rhos,
                                                  const IntegrationConfig& cfg);

struct NoiseCertificateOptions {
  double volume_tolerance = 1e-3;
  /// Allow rho outside (1/2, 1) for exploration.
  bool allow_any_rho = false;
};

/// Compares total noise stability of a candidate against a reference minus
/// the moment correction
///   rhs = S(reference) - eps sqrt(1 - rho^2) sqrt(pi/2) (M(reference) - M(candidate)),
/// margin = rhs - S(candidate). The o(sqrt(1 - rho^2)) remainder is not
/// estimated, so the comparison holds only modulo that term.
struct NoiseCertificate {
  double rho = 0.0;
  double epsilon = 0.0;
  double candidate_stability = 0.0;
  double candidate_stability_std_error = 0.0;
  double reference_stability = 0.0;
  double reference_stability_std_error = 0.0;
  double moment_reference = 0.0;
  double moment_candidate = 0.0;
  double rhs_core = 0.0;
  double margin = 0.0;
  double std_error = 0.0;
  std::string label = "modulo remainder o(sqrt(1-rho^2))";
};

NoiseCertificate noise_stability_certificate(const AffinePartition& reference,
                                             const AffinePartition& candidate, double rho,
                                             double epsilon, const Eigen::VectorXd& w,
                                             const IntegrationConfig& cfg,
                                             const NoiseCertificateOptions& options = {});

/// Throws PreconditionError unless both partitions have m cells and their
/// volumes, estimated on common samples, agree within tolerance + 3 sigma.
void require_matching_volumes(const AffinePartition& reference, const AffinePartition& candidate,
                              const IntegrationConfig& cfg, double tolerance);

}  // namespace gb
