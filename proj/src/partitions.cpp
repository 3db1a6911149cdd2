#include "gauss_bubbles/partitions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include <Eigen/LU>
#include <Eigen/SVD>

namespace gb {

RegularSimplexVertices regular_simplex(int m) { return {m, regular_simplex_vertices<double>(m)}; }

AffinePartition::AffinePartition(Eigen::MatrixXd directions, Eigen::VectorXd offsets,
                                 Eigen::VectorXd shift)
    : directions_(std::move(directions)), offsets_(std::move(offsets)), shift_(std::move(shift)) {
  if (directions_.rows() < 1 || directions_.cols() < 1) {
    throw ContractViolation("affine partition needs at least one cell and dimension >= 1");
  }
  if (offsets_.size() != directions_.rows()) {
    throw ContractViolation("offsets must have one entry per cell");
  }
  if (shift_.size() != directions_.cols()) {
    throw ContractViolation("shift must live in the ambient dimension");
  }
  if (!directions_.allFinite() || !offsets_.allFinite() || !shift_.allFinite()) {
    throw DomainError("affine partition parameters must be finite");
  }
  if (cells() >= 2) {
    bool distinct = false;
    for (int i = 1; i < cells() && !distinct; ++i) {
      distinct = directions_.row(i) != directions_.row(0) || offsets_(i) != offsets_(0);
    }
    if (!distinct) throw DegenerateError("all affine functionals are identical");
  }
}

AffinePartition::AffinePartition(Eigen::MatrixXd directions, Eigen::VectorXd offsets)
    : AffinePartition(directions, std::move(offsets), Eigen::VectorXd::Zero(directions.cols())) {}

Eigen::VectorXd AffinePartition::scores(const Eigen::VectorXd& x) const {
  if (x.size() != dimension()) throw ContractViolation("point has the wrong dimension");
  return directions_ * x + offsets_;
}

int AffinePartition::classify(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd s = scores(x);
  int best = 0;
  for (int i = 1; i < s.size(); ++i) {
    if (s(i) > s(best)) best = i;
  }
  return best;
}

void argmax_columns(const Eigen::MatrixXd& scores, Eigen::VectorXi& labels) {
  labels.resize(scores.cols());
  for (Eigen::Index j = 0; j < scores.cols(); ++j) {
    int best = 0;
    double top = scores(0, j);
    for (Eigen::Index i = 1; i < scores.rows(); ++i) {
      if (scores(i, j) > top) {
        top = scores(i, j);
        best = static_cast<int>(i);
      }
    }
    labels(j) = best;
  }
}

void AffinePartition::classify(const Eigen::MatrixXd& points, Eigen::VectorXi& labels) const {
  if (points.rows() != dimension()) throw ContractViolation("points have the wrong dimension");
  Eigen::MatrixXd s = directions_ * points;
  s.colwise() += offsets_;
  argmax_columns(s, labels);
}

CellMap AffinePartition::cell_map() const {
  return {cells(), dimension(),
          [self = *this](const Eigen::MatrixXd& points, Eigen::VectorXi& labels) {
            self.classify(points, labels);
          }};
}

AffinePartition AffinePartition::with_offsets(Eigen::VectorXd offsets) const {
  return {directions_, std::move(offsets), shift_};
}

AffinePartition AffinePartition::rotated(const Eigen::MatrixXd& rotation) const {
  if (rotation.rows() != dimension() || rotation.cols() != dimension()) {
    throw ContractViolation("rotation has the wrong dimension");
  }
  return {directions_ * rotation.transpose(), offsets_, rotation * shift_};
}

AffinePartition AffinePartition::relabeled(const std::vector<int>& order) const {
  if (static_cast<int>(order.size()) != cells()) {
    throw ContractViolation("relabeling must list every cell once");
  }
  Eigen::MatrixXd dirs(cells(), dimension());
  Eigen::VectorXd offs(cells());
  for (int i = 0; i < cells(); ++i) {
    dirs.row(i) = directions_.row(order[static_cast<std::size_t>(i)]);
    offs(i) = offsets_(order[static_cast<std::size_t>(i)]);
  }
  return {dirs, offs, shift_};
}

AffinePartition simplicial_cone_partition(int m, const Eigen::VectorXd& w) {
  if (m < 2) throw DomainError("simplicial cones need m >= 2");
  if (w.size() < m - 1) {
    throw ContractViolation("shift w must have dimension at least m-1");
  }
  Eigen::MatrixXd dirs = Eigen::MatrixXd::Zero(m, w.size());
  dirs.leftCols(m - 1) = regular_simplex_vertices<double>(m);
  Eigen::VectorXd offsets = -(dirs * w);
  return {dirs, offsets, w};
}

AffinePartition halfspace_split(int d, double t) {
  if (d < 1) throw DomainError("dimension must be positive");
  Eigen::MatrixXd dirs = Eigen::MatrixXd::Zero(2, d);
  dirs(0, 0) = 1.0;
  dirs(1, 0) = -1.0;
  return {dirs, Eigen::Vector2d(-t, t)};
}

AffinePartition full_space(int d) {
  if (d < 1) throw DomainError("dimension must be positive");
  return {Eigen::MatrixXd::Zero(1, d), Eigen::VectorXd::Zero(1)};
}

// ---------------------------------------------------------------------------

RoundCylinder::RoundCylinder(int k, double r, int ambient_dimension, CylinderSide side)
    : k_(k), r_(r), ambient_(ambient_dimension), side_(side) {
  if (ambient_ < 1) throw DomainError("ambient dimension must be positive");
  if (k_ < 0 || k_ > ambient_ - 1) {
    throw DomainError("cylinder needs 0 <= k <= n with ambient dimension n+1");
  }
  if (!(r_ > 0.0) || !std::isfinite(r_)) throw DomainError("cylinder radius must be positive");
}

bool RoundCylinder::contains(const Eigen::VectorXd& x) const {
  const double rho = x.head(k_ + 1).norm();
  return side_ == CylinderSide::inside ? rho <= r_ : rho >= r_;
}

double RoundCylinder::distance_to_set(const Eigen::VectorXd& x) const {
  const double rho = x.head(k_ + 1).norm();
  return side_ == CylinderSide::inside ? std::max(0.0, rho - r_) : std::max(0.0, r_ - rho);
}

CellMap RoundCylinder::cell_map() const {
  return {2, ambient_, [self = *this](const Eigen::MatrixXd& points, Eigen::VectorXi& labels) {
            labels.resize(points.cols());
            for (Eigen::Index j = 0; j < points.cols(); ++j) {
              labels(j) = self.contains(points.col(j)) ? 0 : 1;
            }
          }};
}

// ---------------------------------------------------------------------------

namespace {

// Counts cell memberships for fixed projected scores and variable offsets.
Eigen::VectorXd volumes_for_offsets(const std::vector<Eigen::MatrixXd>& projected,
                                    const Eigen::VectorXd& offsets, double total) {
  auto counts = map_indices<Eigen::VectorXd>(projected.size(), [&](std::uint64_t b) {
    Eigen::MatrixXd s = projected[b];
    s.colwise() += offsets;
    Eigen::VectorXi labels;
    argmax_columns(s, labels);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(offsets.size());
    for (Eigen::Index j = 0; j < labels.size(); ++j) c(labels(j)) += 1.0;
    return c;
  });
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(offsets.size());
  for (const auto& c : counts) sum += c;
  return sum / total;
}

Eigen::VectorXd centered(Eigen::VectorXd c) {
  c.array() -= c.mean();
  return c;
}

}  // namespace

AffinePartition calibrate_offsets_to_volumes(const AffinePartition& partition,
                                             const Eigen::VectorXd& target,
                                             const SampleCache& cache,
                                             const CalibrationOptions& options) {
  const int m = partition.cells();
  if (target.size() != m) throw ContractViolation("target volumes must have one entry per cell");
  if ((target.array() <= 0.0).any() || std::abs(target.sum() - 1.0) > 1e-9) {
    throw DomainError("target volumes must be positive and sum to 1");
  }
  if (cache.config().dimension != partition.dimension()) {
    throw ContractViolation("integration dimension does not match the partition");
  }
  const double total = static_cast<double>(cache.config().sample_count);
  std::vector<Eigen::MatrixXd> projected;
  projected.reserve(cache.blocks().size());
  for (const auto& block : cache.blocks()) projected.push_back(partition.directions() * block);

  const double floor = 0.5 / total;
  const double newton_zone = 10.0 * options.tolerance;
  Eigen::VectorXd c = centered(partition.offsets());
  double residual = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const Eigen::VectorXd vol = volumes_for_offsets(projected, c, total);
    residual = (vol - target).cwiseAbs().maxCoeff();
    if (residual <= options.tolerance) {
      AffinePartition result = partition.with_offsets(c);
      const VolumeReport check = mc_volumes(result.cell_map(), cache);
      if ((check.volumes - target).cwiseAbs().maxCoeff() <= options.tolerance) return result;
    }
    if (residual > newton_zone) {
      for (int i = 0; i < m; ++i) {
        const double step = options.damping * std::log(target(i) / std::max(vol(i), floor));
        c(i) += std::clamp(step, -2.0, 2.0);
      }
    } else {
      constexpr double h = 0.02;
      for (int i = 0; i < m; ++i) {
        Eigen::VectorXd up = c, down = c;
        up(i) += h;
        down(i) -= h;
        const double slope = (volumes_for_offsets(projected, up, total)(i) -
                              volumes_for_offsets(projected, down, total)(i)) /
                             (2.0 * h);
        const double here = volumes_for_offsets(projected, c, total)(i);
        if (slope > 0.0) c(i) -= std::clamp((here - target(i)) / slope, -0.25, 0.25);
      }
    }
    c = centered(c);
  }
  throw CalibrationFailure("offset calibration did not converge (residual " +
                               std::to_string(residual) + ")",
                           c, residual);
}

AffinePartition calibrate_offsets_to_volumes(const AffinePartition& partition,
                                             const Eigen::VectorXd& target,
                                             const IntegrationConfig& cfg,
                                             const CalibrationOptions& options) {
  return calibrate_offsets_to_volumes(partition, target, SampleCache(cfg), options);
}

AffinePartition perturb(const AffinePartition& partition, double magnitude, std::uint64_t seed) {
  if (!(magnitude >= 0.0)) throw DomainError("perturbation magnitude must be >= 0");
  if (magnitude == 0.0) return partition;
  const int m = partition.cells();
  const int d = partition.dimension();
  IntegrationConfig cfg;
  cfg.sample_count = static_cast<std::uint64_t>(m);
  cfg.chunk_size = cfg.sample_count;
  cfg.seed = seed;
  cfg.dimension = d + 1;
  const Eigen::MatrixXd noise =
      gaussian_block(cfg, 0, stream_id(Stream::perturbation), d + 1);
  Eigen::MatrixXd dirs = partition.directions() + magnitude * noise.topRows(d).transpose();
  for (int i = 0; i < m; ++i) {
    const double len = dirs.row(i).norm();
    if (len == 0.0) throw DegenerateError("perturbed direction vanished");
    dirs.row(i) /= len;
  }
  Eigen::VectorXd offsets = partition.offsets() + magnitude * noise.row(d).transpose();
  return {dirs, offsets, partition.shift()};
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd plane_rotation(int d, int a, int b, double angle) {
  Eigen::MatrixXd r = Eigen::MatrixXd::Identity(d, d);
  r(a, a) = std::cos(angle);
  r(b, b) = std::cos(angle);
  r(a, b) = -std::sin(angle);
  r(b, a) = std::sin(angle);
  return r;
}

Estimate symmetric_difference(const AffinePartition& reference, const AffinePartition& candidate,
                              const Eigen::MatrixXd& rotation, const std::vector<int>& matching,
                              const SampleCache& cache) {
  const AffinePartition moved = reference.rotated(rotation);
  return reduce_chunks(cache.config(), 1, [&](std::uint64_t chunk) {
    const Eigen::MatrixXd& pts = cache.blocks()[chunk];
    Eigen::VectorXi ref_labels, cand_labels;
    moved.classify(pts, ref_labels);
    candidate.classify(pts, cand_labels);
    Eigen::MatrixXd values(1, pts.cols());
    for (Eigen::Index j = 0; j < pts.cols(); ++j) {
      values(0, j) = matching[static_cast<std::size_t>(ref_labels(j))] == cand_labels(j) ? 0.0 : 2.0;
    }
    return values;
  });
}

namespace {

struct ProcrustesFit {
  Eigen::MatrixXd rotation;
  double residual = 0.0;
};

// Rotation in SO(d) minimizing sum_i |R a_i - b_i|^2 over matched columns.
ProcrustesFit procrustes(const AffinePartition& reference, const AffinePartition& candidate,
                         const std::vector<int>& matching) {
  const int m = reference.cells();
  const int d = reference.dimension();
  Eigen::MatrixXd a = reference.directions().transpose();
  Eigen::MatrixXd b(d, m);
  for (int i = 0; i < m; ++i) {
    b.col(i) = candidate.directions().row(matching[static_cast<std::size_t>(i)]).transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(b * a.transpose(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::VectorXd signs = Eigen::VectorXd::Ones(d);
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) signs(d - 1) = -1.0;
  ProcrustesFit fit;
  fit.rotation = svd.matrixU() * signs.asDiagonal() * svd.matrixV().transpose();
  fit.residual = (fit.rotation * a - b).squaredNorm();
  for (int i = 0; i < m; ++i) {
    const double dc = reference.offsets()(i) - candidate.offsets()(matching[static_cast<std::size_t>(i)]);
    fit.residual += dc * dc;
  }
  return fit;
}

std::vector<int> greedy_matching(const AffinePartition& reference,
                                 const AffinePartition& candidate) {
  const int m = reference.cells();
  const Eigen::MatrixXd inner = reference.directions() * candidate.directions().transpose();
  std::vector<int> matching(static_cast<std::size_t>(m), -1);
  std::vector<bool> used_ref(static_cast<std::size_t>(m)), used_cand(static_cast<std::size_t>(m));
  for (int round = 0; round < m; ++round) {
    double best = -std::numeric_limits<double>::infinity();
    int bi = -1, bj = -1;
    for (int i = 0; i < m; ++i) {
      if (used_ref[static_cast<std::size_t>(i)]) continue;
      for (int j = 0; j < m; ++j) {
        if (used_cand[static_cast<std::size_t>(j)] || !(inner(i, j) > best)) continue;
        best = inner(i, j);
        bi = i;
        bj = j;
      }
    }
    matching[static_cast<std::size_t>(bi)] = bj;
    used_ref[static_cast<std::size_t>(bi)] = true;
    used_cand[static_cast<std::size_t>(bj)] = true;
  }
  return matching;
}

}  // namespace

Alignment align_rotation(const AffinePartition& reference, const AffinePartition& candidate,
                         const IntegrationConfig& cfg, const AlignmentOptions& options) {
  if (reference.cells() != candidate.cells() ||
      reference.dimension() != candidate.dimension()) {
    throw ContractViolation("alignment needs partitions with equal m and d");
  }
  const int m = reference.cells();
  const int d = reference.dimension();

  // Greedy matching seeds the search; for small m every labeling is scored
  // by its Procrustes residual, preferring the smaller rotation on ties.
  std::vector<int> matching = greedy_matching(reference, candidate);
  ProcrustesFit best = procrustes(reference, candidate, matching);
  if (m <= 7) {
    std::vector<int> perm(static_cast<std::size_t>(m));
    std::iota(perm.begin(), perm.end(), 0);
    do {
      const ProcrustesFit fit = procrustes(reference, candidate, perm);
      const bool better = fit.residual < best.residual - 1e-12 ||
                          (fit.residual <= best.residual + 1e-12 &&
                           fit.rotation.trace() > best.rotation.trace() + 1e-12);
      if (better) {
        best = fit;
        matching = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  }

  const SampleCache cache(cfg.with_dimension(d));
  Alignment result;
  result.rotation = best.rotation;
  result.matching = matching;
  Estimate current = symmetric_difference(reference, candidate, result.rotation, matching, cache);
  constexpr double deg = std::numbers::pi / 180.0;
  for (double step = options.initial_step_deg; step >= options.final_step_deg; step /= 2.0) {
    bool improved = true;
    while (improved) {
      improved = false;
      for (int a = 0; a < d; ++a) {
        for (int b = a + 1; b < d; ++b) {
          for (const double sign : {1.0, -1.0}) {
            const Eigen::MatrixXd trial = plane_rotation(d, a, b, sign * step * deg) * result.rotation;
            const Estimate e = symmetric_difference(reference, candidate, trial, matching, cache);
            if (e.mean(0) < current.mean(0)) {
              result.rotation = trial;
              current = e;
              improved = true;
            }
          }
        }
      }
    }
  }
  result.misalignment = current.mean(0);
  result.std_error = current.std_error(0);
  return result;
}

}  // namespace gb
