#include "gauss_bubbles/gauss_core.hpp"

#include <string>

#include "gauss_bubbles/rng.hpp"

namespace gb {

void IntegrationConfig::validate() const {
  if (sample_count == 0) throw ConfigError("sample_count must be positive");
  if (chunk_size == 0) throw ConfigError("chunk_size must be positive");
  if (dimension < 1) throw ConfigError("dimension must be positive");
  if (sample_count % chunk_size != 0) {
    throw ConfigError("sample_count (" + std::to_string(sample_count) +
                      ") must be a multiple of chunk_size (" + std::to_string(chunk_size) + ")");
  }
  if (chunk_size > 0xFFFFFFFFull) throw ConfigError("chunk_size must fit in 32 bits");
  if (antithetic && chunk_size % 2 != 0) {
    throw ConfigError("antithetic sampling needs an even chunk_size");
  }
}

Eigen::MatrixXd gaussian_block(const IntegrationConfig& cfg, std::uint64_t chunk,
                               std::uint32_t stream, int dimension) {
  const auto n = static_cast<Eigen::Index>(cfg.chunk_size);
  Eigen::MatrixXd block(dimension, n);
  if (dimension == 0) return block;
  const Philox4x32 gen(cfg.seed);
  const auto chunk_lo = static_cast<std::uint32_t>(chunk);
  const auto chunk_hi = static_cast<std::uint32_t>(chunk >> 32);
  const Eigen::Index step = cfg.antithetic ? 2 : 1;
  for (Eigen::Index j = 0; j < n; j += step) {
    const auto index = static_cast<std::uint32_t>(j / step);
    for (int k = 0; k < dimension; k += 2) {
      const auto word = (stream << 16) | static_cast<std::uint32_t>(k / 2);
      const auto r = gen({word, index, chunk_lo, chunk_hi});
      block(k, j) = normal_quantile(uniform_open(r[0], r[1]));
      if (k + 1 < dimension) block(k + 1, j) = normal_quantile(uniform_open(r[2], r[3]));
    }
    if (cfg.antithetic) block.col(j + 1) = -block.col(j);
  }
  return block;
}

void MeanAccumulator::add_block(const Eigen::MatrixXd& values, bool antithetic) {
  Eigen::MatrixXd units;
  if (antithetic) {
    const Eigen::Index pairs = values.cols() / 2;
    units.resize(values.rows(), pairs);
    for (Eigen::Index k = 0; k < pairs; ++k) {
      units.col(k) = 0.5 * (values.col(2 * k) + values.col(2 * k + 1));
    }
  } else {
    units = values;
  }
  MeanAccumulator block(values.rows());
  block.units_ = static_cast<double>(units.cols());
  if (units.cols() > 0) {
    block.mean_ = units.rowwise().mean();
    block.m2_ = (units.colwise() - block.mean_).rowwise().squaredNorm();
  }
  merge(block);
}

void MeanAccumulator::merge(const MeanAccumulator& other) {
  if (other.units_ == 0.0) return;
  if (units_ == 0.0) {
    *this = other;
    return;
  }
  const double total = units_ + other.units_;
  const Eigen::VectorXd delta = other.mean_ - mean_;
  mean_ += delta * (other.units_ / total);
  m2_ += other.m2_ + delta.cwiseAbs2() * (units_ * other.units_ / total);
  units_ = total;
}

Estimate MeanAccumulator::estimate() const {
  Estimate e{mean_, Eigen::VectorXd::Zero(mean_.size())};
  if (units_ > 1.0) e.std_error = (m2_ / ((units_ - 1.0) * units_)).cwiseSqrt();
  return e;
}

CorrelatedBlock sample_correlated_pairs(double rho, const IntegrationConfig& cfg,
                                        std::uint64_t chunk) {
  if (!(std::abs(rho) < 1.0)) throw DomainError("correlation must satisfy |rho| < 1");
  CorrelatedBlock pair;
  pair.x = gaussian_block(cfg, chunk, Stream::volume);
  pair.y = rho * pair.x +
           std::sqrt(1.0 - rho * rho) * gaussian_block(cfg, chunk, Stream::pair_partner);
  return pair;
}

SampleCache::SampleCache(const IntegrationConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  blocks_ = map_indices<Eigen::MatrixXd>(
      cfg_.chunk_count(), [&](std::uint64_t chunk) { return gaussian_block(cfg_, chunk); });
}

namespace {

void check_map(const CellMap& map, const IntegrationConfig& cfg) {
  cfg.validate();
  if (map.dimension != cfg.dimension) {
    throw ContractViolation("cell map dimension " + std::to_string(map.dimension) +
                            " does not match integration dimension " +
                            std::to_string(cfg.dimension));
  }
  if (map.cells < 1) throw ContractViolation("cell map has no cells");
}

Eigen::MatrixXd one_hot(const CellMap& map, const Eigen::MatrixXd& points) {
  Eigen::VectorXi labels(points.cols());
  map.classify(points, labels);
  Eigen::MatrixXd values = Eigen::MatrixXd::Zero(map.cells, points.cols());
  for (Eigen::Index j = 0; j < points.cols(); ++j) values(labels(j), j) = 1.0;
  return values;
}

template <class BlockFn>
VolumeReport volumes_impl(const CellMap& map, const IntegrationConfig& cfg, BlockFn&& block) {
  check_map(map, cfg);
  const Estimate e = reduce_chunks(cfg, map.cells, [&](std::uint64_t chunk) {
    return one_hot(map, block(chunk));
  });
  return {e.mean, e.std_error};
}

template <class BlockFn>
MomentReport moments_impl(const CellMap& map, const Eigen::VectorXd& w,
                          const IntegrationConfig& cfg, BlockFn&& block) {
  check_map(map, cfg);
  const int m = map.cells;
  const int d = map.dimension;
  if (w.size() != d) throw ContractViolation("shift w has the wrong dimension");

  // Rows 0..m-1: cell indicators; rows m + i*d + k: x_k 1{cell i}.
  const Estimate first = reduce_chunks(cfg, m + m * d, [&](std::uint64_t chunk) {
    const Eigen::MatrixXd pts = block(chunk);
    Eigen::VectorXi labels(pts.cols());
    map.classify(pts, labels);
    Eigen::MatrixXd values = Eigen::MatrixXd::Zero(m + m * d, pts.cols());
    for (Eigen::Index j = 0; j < pts.cols(); ++j) {
      const int c = labels(j);
      values(c, j) = 1.0;
      values.block(m + c * d, j, d, 1) = pts.col(j);
    }
    return values;
  });

  MomentReport report;
  report.volumes = first.mean.head(m);
  report.volume_std_error = first.std_error.head(m);
  report.moments = first.mean.tail(m * d).reshaped(d, m);
  report.moment_std_error = first.std_error.tail(m * d).reshaped(d, m);
  report.shift = w;
  report.scaled_shifts.resize(d, m);
  const bool shifted = w.squaredNorm() > 0.0;
  for (int i = 0; i < m; ++i) {
    if (report.volumes(i) <= 0.0) {
      if (shifted) {
        throw DegenerateError("cell " + std::to_string(i + 1) +
                              " has zero estimated volume; w / a_i is undefined");
      }
      report.scaled_shifts.col(i).setZero();
    } else {
      report.scaled_shifts.col(i) = w / report.volumes(i);
    }
  }
  // Centered moments int_{Omega_i} (x - w_i) gamma = z_i - a_i * w_i.
  Eigen::MatrixXd centered(d, m);
  for (int i = 0; i < m; ++i) {
    centered.col(i) = report.moments.col(i) - report.volumes(i) * report.scaled_shifts.col(i);
  }
  report.moment_functional = centered.colwise().squaredNorm().sum();

  // Delta method. With w_i = w / a_i taken from the same estimate, a_i * w_i = w
  // and M linearizes to the mean of 2 <centered_c, x> with c the cell of x.
  const Estimate second = reduce_chunks(cfg, 1, [&](std::uint64_t chunk) {
    const Eigen::MatrixXd pts = block(chunk);
    Eigen::VectorXi labels(pts.cols());
    map.classify(pts, labels);
    Eigen::MatrixXd values(1, pts.cols());
    for (Eigen::Index j = 0; j < pts.cols(); ++j) {
      const int c = labels(j);
      values(0, j) = 2.0 * centered.col(c).dot(pts.col(j));
    }
    return values;
  });
  report.moment_functional_std_error = second.std_error(0);
  report.penalty = kPenaltyScale * report.moment_functional;
  report.penalty_std_error = kPenaltyScale * report.moment_functional_std_error;
  return report;
}

}  // namespace

VolumeReport mc_volumes(const CellMap& map, const IntegrationConfig& cfg) {
  return volumes_impl(map, cfg, [&](std::uint64_t chunk) { return gaussian_block(cfg, chunk); });
}

VolumeReport mc_volumes(const CellMap& map, const SampleCache& cache) {
  return volumes_impl(map, cache.config(),
                      [&](std::uint64_t chunk) -> const Eigen::MatrixXd& {
                        return cache.blocks()[chunk];
                      });
}

MomentReport mc_moments(const CellMap& map, const Eigen::VectorXd& w,
                        const IntegrationConfig& cfg) {
  return moments_impl(map, w, cfg,
                      [&](std::uint64_t chunk) { return gaussian_block(cfg, chunk); });
}

MomentReport mc_moments(const CellMap& map, const Eigen::VectorXd& w, const SampleCache& cache) {
  return moments_impl(map, w, cache.config(),
                      [&](std::uint64_t chunk) -> const Eigen::MatrixXd& {
                        return cache.blocks()[chunk];
                      });
}

}  // namespace gb
