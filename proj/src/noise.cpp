#include "gauss_bubbles/noise.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Cholesky>

namespace gb {

NoiseStabilityReport noise_stability_partition(const CellMap& map, double rho,
                                               const IntegrationConfig& cfg) {
  cfg.validate();
  if (!(std::abs(rho) < 1.0)) throw DomainError("correlation must satisfy |rho| < 1");
  if (map.dimension != cfg.dimension) {
    throw ContractViolation("integration dimension does not match the partition");
  }
  const int m = map.cells;
  const Estimate e = reduce_chunks(cfg, m + 1, [&](std::uint64_t chunk) {
    const CorrelatedBlock pair = sample_correlated_pairs(rho, cfg, chunk);
    Eigen::VectorXi lx, ly;
    map.classify(pair.x, lx);
    map.classify(pair.y, ly);
    Eigen::MatrixXd values = Eigen::MatrixXd::Zero(m + 1, pair.x.cols());
    for (Eigen::Index j = 0; j < lx.size(); ++j) {
      if (lx(j) == ly(j)) {
        values(lx(j), j) = 1.0;
        values(m, j) = 1.0;
      }
    }
    return values;
  });
  NoiseStabilityReport report;
  report.rho = rho;
  report.per_cell = e.mean.head(m);
  report.per_cell_std_error = e.std_error.head(m);
  report.total = e.mean(m);
  report.total_std_error = e.std_error(m);
  report.sample_count = cfg.sample_count;
  report.seed = cfg.seed;
  return report;
}

namespace {

// The deficit indicator for one sample pair: cell labels of X and Y_rho.
template <class Indicator>
NoiseLimitEstimate noise_limit(const CellMap& map, std::span<const double> rhos,
                               const IntegrationConfig& cfg, double scale, Indicator&& deficit) {
  cfg.validate();
  if (map.dimension != cfg.dimension) {
    throw ContractViolation("integration dimension does not match the partition");
  }
  if (rhos.size() < 3) throw ConfigError("rho schedule needs at least three values");
  for (std::size_t k = 0; k < rhos.size(); ++k) {
    if (!(rhos[k] > 0.0 && rhos[k] < 1.0)) throw DomainError("rho schedule must lie in (0, 1)");
    if (k > 0 && !(rhos[k] > rhos[k - 1])) throw ConfigError("rho schedule must increase");
  }
  if (rhos.back() < 0.99) throw ConfigError("rho schedule must reach at least 0.99");

  const auto n = static_cast<Eigen::Index>(rhos.size());
  Eigen::MatrixXd design(n, 2);
  Eigen::VectorXd weight(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double rho = rhos[static_cast<std::size_t>(k)];
    design.row(k) << 1.0, std::sqrt(1.0 - rho * rho);
    weight(k) = scale * std::sqrt(2.0 * std::numbers::pi) / std::acos(rho);
  }
  const Eigen::RowVectorXd intercept =
      (design.transpose() * design).ldlt().solve(design.transpose()).row(0);

  const Estimate e = reduce_chunks(cfg, n + 1, [&](std::uint64_t chunk) {
    const Eigen::MatrixXd x = gaussian_block(cfg, chunk, Stream::volume);
    const Eigen::MatrixXd z = gaussian_block(cfg, chunk, Stream::pair_partner);
    Eigen::VectorXi lx, ly;
    map.classify(x, lx);
    Eigen::MatrixXd values = Eigen::MatrixXd::Zero(n + 1, x.cols());
    for (Eigen::Index k = 0; k < n; ++k) {
      const double rho = rhos[static_cast<std::size_t>(k)];
      const Eigen::MatrixXd y = rho * x + std::sqrt(1.0 - rho * rho) * z;
      map.classify(y, ly);
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        if (deficit(lx(j), ly(j))) values(k, j) = weight(k);
      }
    }
    values.row(n) = intercept * values.topRows(n);
    return values;
  });

  NoiseLimitEstimate out;
  for (Eigen::Index k = 0; k < n; ++k) {
    out.table.push_back({rhos[static_cast<std::size_t>(k)], e.mean(k), e.std_error(k)});
  }
  out.perimeter = e.mean(n);
  out.std_error = e.std_error(n);
  const NoiseLimitRow& last = out.table.back();
  if (last.std_error > 0.2 * last.normalized_deficit) {
    throw PrecisionError("noise deficit at rho = " + std::to_string(last.rho) +
                         " is not resolved; increase sample_count");
  }
  return out;
}

}  // namespace

NoiseLimitEstimate perimeter_from_noise_limit(const CellMap& map, std::span<const double> rhos,
                                              const IntegrationConfig& cfg) {
  return noise_limit(map, rhos, cfg, 0.5, [](int a, int b) { return a != b; });
}

NoiseLimitEstimate set_perimeter_from_noise_limit(const CellMap& map, int cell,
                                                  std::span<const double> rhos,
                                                  const IntegrationConfig& cfg) {
  if (cell < 0 || cell >= map.cells) throw ContractViolation("cell index out of range");
  return noise_limit(map, rhos, cfg, 1.0,
                     [cell](int a, int b) { return a == cell && b != cell; });
}

void require_matching_volumes(const AffinePartition& reference, const AffinePartition& candidate,
                              const IntegrationConfig& cfg, double tolerance) {
  if (reference.cells() != candidate.cells() ||
      reference.dimension() != candidate.dimension()) {
    throw PreconditionError("reference and candidate must have the same m and d");
  }
  // Paired over common samples: the error bar is that of the difference.
  const int m = reference.cells();
  const Estimate diff = reduce_chunks(cfg, m, [&](std::uint64_t chunk) {
    const Eigen::MatrixXd pts = gaussian_block(cfg, chunk);
    Eigen::VectorXi ra, rb;
    reference.classify(pts, ra);
    candidate.classify(pts, rb);
    Eigen::MatrixXd values = Eigen::MatrixXd::Zero(m, pts.cols());
    for (Eigen::Index j = 0; j < pts.cols(); ++j) {
      values(ra(j), j) += 1.0;
      values(rb(j), j) -= 1.0;
    }
    return values;
  });
  for (int i = 0; i < m; ++i) {
    const double gap = std::abs(diff.mean(i));
    if (gap > tolerance + 3.0 * diff.std_error(i)) {
      throw PreconditionError("volume of cell " + std::to_string(i + 1) + " differs by " +
                              std::to_string(gap) + " (tolerance " + std::to_string(tolerance) +
                              " + 3 sigma " + std::to_string(3.0 * diff.std_error(i)) +
                              "); calibrate the candidate first");
    }
  }
}

NoiseCertificate noise_stability_certificate(const AffinePartition& reference,
                                             const AffinePartition& candidate, double rho,
                                             double epsilon, const Eigen::VectorXd& w,
                                             const IntegrationConfig& cfg,
                                             const NoiseCertificateOptions& options) {
  if (!options.allow_any_rho && !(rho > 0.5 && rho < 1.0)) {
    throw DomainError("certificate needs 1/2 < rho < 1");
  }
  if (!(epsilon >= 0.0)) throw DomainError("epsilon must be >= 0");
  require_matching_volumes(reference, candidate, cfg, options.volume_tolerance);

  const NoiseStabilityReport ref = noise_stability_partition(reference, rho, cfg);
  const NoiseStabilityReport cand = noise_stability_partition(candidate, rho, cfg);
  const MomentReport mref = mc_moments(reference.cell_map(), w, cfg);
  const MomentReport mcand = mc_moments(candidate.cell_map(), w, cfg);

  NoiseCertificate out;
  out.rho = rho;
  out.epsilon = epsilon;
  out.candidate_stability = cand.total;
  out.candidate_stability_std_error = cand.total_std_error;
  out.reference_stability = ref.total;
  out.reference_stability_std_error = ref.total_std_error;
  out.moment_reference = mref.moment_functional;
  out.moment_candidate = mcand.moment_functional;
  const double factor = epsilon * std::sqrt(1.0 - rho * rho) * kPenaltyScale;
  out.rhs_core = ref.total - factor * (mref.moment_functional - mcand.moment_functional);
  out.margin = out.rhs_core - cand.total;
  out.std_error = std::sqrt(ref.total_std_error * ref.total_std_error +
                            cand.total_std_error * cand.total_std_error +
                            factor * factor *
                                (mref.moment_functional_std_error * mref.moment_functional_std_error +
                                 mcand.moment_functional_std_error * mcand.moment_functional_std_error));
  return out;
}

}  // namespace gb
