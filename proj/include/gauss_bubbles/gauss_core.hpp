#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <vector>

#include <Eigen/Core>

#include "gauss_bubbles/errors.hpp"
#include "gauss_bubbles/parallel.hpp"

namespace gb {

/// Monte Carlo settings. Every estimate is a pure function of these fields:
/// samples are produced chunk by chunk from a counter-based stream keyed by
/// (seed, chunk index, stream id), and chunk results are folded in index
/// order.
struct IntegrationConfig {
  std::uint64_t sample_count = 1'000'000;
  std::uint64_t seed = 0;
  int dimension = 2;
  std::uint64_t chunk_size = 10'000;
  bool antithetic = false;

  /// Throws ConfigError when the fields are inconsistent.
  void validate() const;
  std::uint64_t chunk_count() const { return sample_count / chunk_size; }
  IntegrationConfig with_dimension(int d) const {
    IntegrationConfig copy = *this;
    copy.dimension = d;
    return copy;
  }
};

/// Stream identifiers; facet pair p draws from facet_base + p.
enum class Stream : std::uint32_t {
  volume = 0,
  pair_partner = 1,
  perturbation = 2,
  restart = 3,
  discrete = 4,
  facet_base = 1024,
};

constexpr std::uint32_t stream_id(Stream s, std::uint32_t offset = 0) {
  return static_cast<std::uint32_t>(s) + offset;
}

/// dimension x chunk_size block of standard Gaussian samples for one chunk.
/// With antithetic sampling, column 2k+1 is the exact reflection of 2k.
Eigen::MatrixXd gaussian_block(const IntegrationConfig& cfg, std::uint64_t chunk,
                               std::uint32_t stream, int dimension);

/// Same, using cfg.dimension.
inline Eigen::MatrixXd gaussian_block(const IntegrationConfig& cfg, std::uint64_t chunk,
                                      Stream stream = Stream::volume) {
  return gaussian_block(cfg, chunk, stream_id(stream), cfg.dimension);
}

template <class Scalar>
Scalar gaussian_density(const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& x,
                        int k) {
  if (k < 1 || x.size() != k) {
    throw ContractViolation("gaussian_density: point length does not match dimension");
  }
  using std::exp;
  using std::pow;
  const Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
  return pow(two_pi, -Scalar(k) / Scalar(2)) * exp(-x.squaredNorm() / Scalar(2));
}

inline double gaussian_density(const Eigen::VectorXd& x) {
  return gaussian_density<double>(x, static_cast<int>(x.size()));
}

/// One-dimensional standard normal density.
inline double gaussian_density_1d(double t) {
  return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi);
}

/// Sample means with standard errors (sample stdev / sqrt(units)).
struct Estimate {
  Eigen::VectorXd mean;
  Eigen::VectorXd std_error;
};

/// Streaming mean/variance of a vector-valued sample, merged chunk by chunk.
/// Antithetic blocks are reduced to pair averages before accumulation, so the
/// reported error reflects the pairing.
class MeanAccumulator {
 public:
  MeanAccumulator() = default;
  explicit MeanAccumulator(Eigen::Index components)
      : mean_(Eigen::VectorXd::Zero(components)), m2_(Eigen::VectorXd::Zero(components)) {}

  /// values is components x samples.
  void add_block(const Eigen::MatrixXd& values, bool antithetic);
  void merge(const MeanAccumulator& other);
  Estimate estimate() const;
  double units() const { return units_; }

 private:
  double units_ = 0.0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

/// Folds per-chunk value blocks in chunk order. block_values(chunk) returns a
/// components x chunk_size matrix.
template <class BlockFn>
Estimate reduce_chunks(const IntegrationConfig& cfg, Eigen::Index components,
                       BlockFn&& block_values) {
  auto parts = map_indices<MeanAccumulator>(cfg.chunk_count(), [&](std::uint64_t chunk) {
    MeanAccumulator acc(components);
    acc.add_block(block_values(chunk), cfg.antithetic);
    return acc;
  });
  MeanAccumulator total(components);
  for (const auto& part : parts) total.merge(part);
  return total.estimate();
}

/// A total map from R^d to cell labels 0..cells-1, evaluated column-wise.
struct CellMap {
  int cells = 0;
  int dimension = 0;
  std::function<void(const Eigen::MatrixXd& points, Eigen::VectorXi& labels)> classify;
};

/// Correlated Gaussian pairs: y = rho*x + sqrt(1-rho^2)*z, z independent.
struct CorrelatedBlock {
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;
};

/// Pairs for one chunk. Throws DomainError unless |rho| < 1.
CorrelatedBlock sample_correlated_pairs(double rho, const IntegrationConfig& cfg,
                                        std::uint64_t chunk);

struct VolumeReport {
  Eigen::VectorXd volumes;
  Eigen::VectorXd std_error;
};

VolumeReport mc_volumes(const CellMap& map, const IntegrationConfig& cfg);

/// Materialized sample blocks, reused when the same points are classified
/// many times (calibration, optimization with common random numbers).
class SampleCache {
 public:
  explicit SampleCache(const IntegrationConfig& cfg);
  const IntegrationConfig& config() const { return cfg_; }
  const std::vector<Eigen::MatrixXd>& blocks() const { return blocks_; }

 private:
  IntegrationConfig cfg_;
  std::vector<Eigen::MatrixXd> blocks_;
};

/// Bit-identical to mc_volumes(map, cache.config()).
VolumeReport mc_volumes(const CellMap& map, const SampleCache& cache);

struct MomentReport {
  Eigen::VectorXd volumes;          // a_i
  Eigen::VectorXd volume_std_error;
  Eigen::MatrixXd moments;          // d x m, column i = z^(i)
  Eigen::MatrixXd moment_std_error;
  Eigen::VectorXd shift;            // w
  Eigen::MatrixXd scaled_shifts;    // d x m, column i = w / a_i
  double moment_functional = 0.0;   // M
  double moment_functional_std_error = 0.0;
  double penalty = 0.0;             // sqrt(pi/2) * M
  double penalty_std_error = 0.0;
};

/// Per-cell Gaussian volumes and first moments together with
/// M = sum_i |z^(i) - a_i w / a_i|^2. Throws DegenerateError when w != 0 and a
/// cell received no samples.
MomentReport mc_moments(const CellMap& map, const Eigen::VectorXd& w, const IntegrationConfig& cfg);
MomentReport mc_moments(const CellMap& map, const Eigen::VectorXd& w, const SampleCache& cache);

inline constexpr double kPenaltyScale = 1.2533141373155002;  // sqrt(pi / 2)
inline constexpr double kMomentBound = 0.3989422804014327;   // 1 / sqrt(2 pi)

class AffinePartition;
class RoundCylinder;

/// Both sides of the Gaussian divergence identity
///   int_Omega x gamma dx = - int_{dOmega} N gamma dx
/// for one polyhedral cell.
struct DivergenceReport {
  Eigen::VectorXd volume_integral;
  Eigen::VectorXd surface_integral;
  Eigen::VectorXd residual;  // volume_integral + surface_integral
  double residual_norm = 0.0;
  double std_error = 0.0;    // combined, same scale as residual_norm
};

DivergenceReport divergence_identity_check(const AffinePartition& partition, int cell,
                                           const IntegrationConfig& cfg);
/// Curved boundaries are not supported; always throws UnsupportedGeometry.
DivergenceReport divergence_identity_check(const RoundCylinder& cylinder,
                                           const IntegrationConfig& cfg);

}  // namespace gb
