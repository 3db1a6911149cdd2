#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "gauss_bubbles/gauss_core.hpp"

namespace gb {

/// Vertices of a regular simplex centred at the origin, one per row:
/// m unit vectors in R^{m-1} with pairwise inner products -1/(m-1).
/// Canonical orientation: z_1 = e_1, and the remaining vertices are the
/// (m-1)-vertex simplex scaled into the orthogonal complement of e_1.
template <class Scalar = double>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> regular_simplex_vertices(int m) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (m < 2) throw DomainError("regular simplex needs m >= 2");
  if (m == 2) {
    Matrix v(2, 1);
    v << Scalar(1), Scalar(-1);
    return v;
  }
  const Matrix inner = regular_simplex_vertices<Scalar>(m - 1);
  const Scalar s = Scalar(m - 1);
  using std::sqrt;
  const Scalar height = sqrt(Scalar(1) - Scalar(1) / (s * s));
  Matrix v = Matrix::Zero(m, m - 1);
  v(0, 0) = Scalar(1);
  v.bottomLeftCorner(m - 1, 1).setConstant(Scalar(-1) / s);
  v.bottomRightCorner(m - 1, m - 2) = height * inner;
  return v;
}

struct RegularSimplexVertices {
  int m = 0;
  Eigen::MatrixXd vertices;  // m x (m-1)
};

RegularSimplexVertices regular_simplex(int m);

/// Partition of R^d into m cells
///   cell(x) = argmax_i <x, z_i> + c_i,
/// ties resolved to the lowest index. Cells are numbered from 0.
class AffinePartition {
 public:
  /// directions: m x d (row i = z_i); offsets: m; shift: d (metadata).
  AffinePartition(Eigen::MatrixXd directions, Eigen::VectorXd offsets, Eigen::VectorXd shift);
  AffinePartition(Eigen::MatrixXd directions, Eigen::VectorXd offsets);

  int cells() const { return static_cast<int>(directions_.rows()); }
  int dimension() const { return static_cast<int>(directions_.cols()); }
  const Eigen::MatrixXd& directions() const { return directions_; }
  const Eigen::VectorXd& offsets() const { return offsets_; }
  const Eigen::VectorXd& shift() const { return shift_; }

  Eigen::VectorXd scores(const Eigen::VectorXd& x) const;
  int classify(const Eigen::VectorXd& x) const;
  void classify(const Eigen::MatrixXd& points, Eigen::VectorXi& labels) const;
  CellMap cell_map() const;

  /// Same directions, new offsets (not renormalized).
  AffinePartition with_offsets(Eigen::VectorXd offsets) const;
  /// Image R(Omega_i) under the orthogonal map R: directions become R z_i.
  AffinePartition rotated(const Eigen::MatrixXd& rotation) const;
  /// Cell i of the result is cell order[i] of this partition.
  AffinePartition relabeled(const std::vector<int>& order) const;

  friend bool operator==(const AffinePartition& a, const AffinePartition& b) {
    return a.directions_ == b.directions_ && a.offsets_ == b.offsets_ && a.shift_ == b.shift_;
  }

 private:
  Eigen::MatrixXd directions_;
  Eigen::VectorXd offsets_;
  Eigen::VectorXd shift_;
};

/// Label of the largest entry of each column, lowest index on ties.
void argmax_columns(const Eigen::MatrixXd& scores, Eigen::VectorXi& labels);

/// Cones over the regular simplex translated by w: c_i = -<w, z_i>. The
/// ambient dimension is w.size() >= m-1; extra coordinates are zero in z_i.
AffinePartition simplicial_cone_partition(int m, const Eigen::VectorXd& w);

/// Two half-spaces in R^d split at <x, e_1> = t; cell 0 is {x_1 >= t}.
AffinePartition halfspace_split(int d, double t);

/// The single-cell partition of R^d.
AffinePartition full_space(int d);

enum class CylinderSide { inside, outside };

/// Omega = {x : |(x_1..x_{k+1})| <= r} (inside) or its complement (outside);
/// boundary r S^k x R^{n-k} in R^{n+1}.
class RoundCylinder {
 public:
  RoundCylinder(int k, double r, int ambient_dimension, CylinderSide side = CylinderSide::inside);

  int k() const { return k_; }
  double radius() const { return r_; }
  int ambient_dimension() const { return ambient_; }
  CylinderSide side() const { return side_; }

  bool contains(const Eigen::VectorXd& x) const;
  /// Euclidean distance from x to Omega (0 inside).
  double distance_to_set(const Eigen::VectorXd& x) const;
  /// Cell 0 = Omega, cell 1 = complement.
  CellMap cell_map() const;

 private:
  int k_;
  double r_;
  int ambient_;
  CylinderSide side_;
};

struct CalibrationOptions {
  double tolerance = 1e-3;
  double damping = 0.5;
  int max_iterations = 200;
};

/// Adjusts offsets until the Monte Carlo volumes match target within
/// tolerance: damped steps c_i += eta log(a_i / a_hat_i) while far from the
/// target, then coordinate Newton sweeps. Offsets are normalized to sum 0.
/// Throws CalibrationFailure carrying the last iterate.
AffinePartition calibrate_offsets_to_volumes(const AffinePartition& partition,
                                             const Eigen::VectorXd& target,
                                             const IntegrationConfig& cfg,
                                             const CalibrationOptions& options = {});
AffinePartition calibrate_offsets_to_volumes(const AffinePartition& partition,
                                             const Eigen::VectorXd& target,
                                             const SampleCache& cache,
                                             const CalibrationOptions& options = {});

/// Gaussian noise of the given scale on directions and offsets, directions
/// renormalized. Deterministic in seed; magnitude 0 returns the input.
AffinePartition perturb(const AffinePartition& partition, double magnitude, std::uint64_t seed);

struct AlignmentOptions {
  double initial_step_deg = 2.0;
  double final_step_deg = 0.05;
};

struct Alignment {
  Eigen::MatrixXd rotation;   // d x d, orthogonal, det +1
  std::vector<int> matching;  // reference cell i <-> candidate cell matching[i]
  double misalignment = 0.0;  // sum_i gamma(R Omega_i \triangle Omega'_matching[i])
  double std_error = 0.0;
};

/// Sum over matched cells of the Gaussian measure of R(Omega_i) symmetric
/// difference Omega'_{matching[i]}, for a fixed rotation.
Estimate symmetric_difference(const AffinePartition& reference, const AffinePartition& candidate,
                              const Eigen::MatrixXd& rotation, const std::vector<int>& matching,
                              const SampleCache& cache);

/// Rotation approximately minimizing the symmetric-difference measure between
/// the rotated reference and the candidate: label matching, Procrustes on the
/// matched directions, then a small-angle search in coordinate planes.
Alignment align_rotation(const AffinePartition& reference, const AffinePartition& candidate,
                         const IntegrationConfig& cfg, const AlignmentOptions& options = {});

/// Rotation by angle (radians) in the (a, b) coordinate plane of R^d.
Eigen::MatrixXd plane_rotation(int d, int a, int b, double angle);

}  // namespace gb
