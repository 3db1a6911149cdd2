#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gauss_bubbles/gauss_core.hpp"
#include "gauss_bubbles/partitions.hpp"

namespace gb {

/// The hyperplane carrying Sigma_ij. normal = N_ij points from cell i into
/// cell j; points on the plane satisfy <x, normal> = offset.
struct InterfaceFacet {
  int i = 0;
  int j = 0;
  Eigen::VectorXd normal;
  double offset = 0.0;
  Eigen::MatrixXd basis;  // d x (d-1), orthonormal, spans normal^perp
};

/// Facet between cells i and j, or nullopt when z_i = z_j with c_i != c_j
/// (parallel functionals never tie). Throws DegenerateError when the two
/// functionals coincide.
std::optional<InterfaceFacet> interface_facet(const AffinePartition& partition, int i, int j);

/// True when cells i and j jointly attain the maximum score at x, up to a
/// 1e-12 band.
bool on_interface(const AffinePartition& partition, int i, int j, const Eigen::VectorXd& x);

enum class PerimeterMethod { facet, minkowski, closed_form };
std::string to_string(PerimeterMethod method);

struct PairMass {
  int i = 0;
  int j = 0;
  double mass = 0.0;
  double std_error = 0.0;
};

struct PerimeterReport {
  std::vector<PairMass> pairs;  // all i < j
  double total = 0.0;
  double std_error = 0.0;
  PerimeterMethod method = PerimeterMethod::facet;
};

/// gamma(Sigma_ij) = gamma_1(b) * P(i, j joint argmax at b N + y), with y a
/// standard Gaussian of the hyperplane N^perp.
PerimeterReport facet_perimeter(const AffinePartition& partition, const IntegrationConfig& cfg);

struct PairedPerimeters {
  PerimeterReport reference;
  PerimeterReport candidate;
  double difference = 0.0;  // P(candidate) - P(reference), paired estimate
  double std_error = 0.0;
};

/// Both facet perimeters with pair (i, j) of the two partitions evaluated on
/// the same samples, so the error bar of the difference reflects the
/// difference rather than the two totals. The reports match facet_perimeter
/// up to rounding.
PairedPerimeters paired_facet_perimeters(const AffinePartition& reference,
                                         const AffinePartition& candidate,
                                         const IntegrationConfig& cfg);

/// Distance-to-set oracle for one set Omega in R^d; 0 on Omega.
struct SetGeometry {
  int dimension = 0;
  std::function<double(const Eigen::VectorXd&)> distance;
};

/// Exact Euclidean distance to cell `cell` of an affine partition (a convex
/// polyhedron), by projecting onto every face of dimension >= d - (m-1).
SetGeometry cell_geometry(const AffinePartition& partition, int cell);
SetGeometry cylinder_geometry(const RoundCylinder& cylinder);

struct MinkowskiRow {
  double epsilon = 0.0;
  double estimate = 0.0;  // gamma(outer epsilon-collar) / epsilon
  double std_error = 0.0;
};

struct MinkowskiEstimate {
  double perimeter = 0.0;  // intercept of the least-squares line in epsilon
  double std_error = 0.0;
  std::vector<MinkowskiRow> table;
};

/// Minkowski-content estimate of the Gaussian surface area of Omega. The
/// collar is {x notin Omega : dist(x, Omega) < eps}; every epsilon uses the
/// same samples. Needs at least three strictly decreasing positive values.
MinkowskiEstimate minkowski_perimeter(const SetGeometry& set, std::span<const double> epsilons,
                                      const IntegrationConfig& cfg);

struct CylinderMeasures {
  double perimeter = 0.0;
  double volume = 0.0;  // Gaussian measure of Omega (inside or outside)
};

/// perimeter = omega_k r^k (2 pi)^{-(k+1)/2} e^{-r^2/2};
/// inside volume = P(chi^2_{k+1} <= r^2).
CylinderMeasures cylinder_closed_forms(const RoundCylinder& cylinder);

enum class ScanOrientation { inside, outside, both };

struct ScanRow {
  int k = 0;
  CylinderSide side = CylinderSide::inside;
  bool feasible = false;
  double radius = 0.0;
  double perimeter = 0.0;
};

struct SymmetricScan {
  std::vector<ScanRow> rows;
  int best_k = -1;
  CylinderSide best_side = CylinderSide::inside;
  double best_perimeter = 0.0;
};

/// Round-cylinder candidates of Gaussian volume a for k = 0..k_max: radius
/// by bisection on the chi-square CDF, then the closed-form perimeter.
/// Rows without a solution are marked infeasible; the minimizer prefers the
/// smaller k on ties.
SymmetricScan symmetric_scan(double a, int k_max, ScanOrientation orientation);

/// Radius with P(chi^2_{k+1} <= r^2) = p, by bisection.
double chi_radius(int k, double p);

struct TailCheck {
  double tail_mass = 0.0;
  double std_error = 0.0;
  double bound = 0.0;        // 3m * gamma(sphere of radius r)
  double proof_bound = 0.0;  // 2m * gamma(sphere of radius r)
  bool pass = false;         // tail <= bound + 3 sigma
  bool pass_proof_bound = false;
};

/// Interface mass outside the ball |x - w| <= r against the tail-decay bound.
/// Requires r > sqrt(d) + |w|; throws HypothesisNotMet otherwise.
TailCheck tail_perimeter_check(const AffinePartition& partition, double r,
                               const Eigen::VectorXd& w, const IntegrationConfig& cfg);

/// Gaussian measure of the sphere of radius r in R^d.
double sphere_gaussian_measure(int d, double r);

}  // namespace gb
