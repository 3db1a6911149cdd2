#include "gauss_bubbles/perimeter.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/QR>

#include "gauss_bubbles/special_functions.hpp"

namespace gb {

namespace {
constexpr double kJointTolerance = 1e-12;
}

std::optional<InterfaceFacet> interface_facet(const AffinePartition& partition, int i, int j) {
  if (i < 0 || j < 0 || i >= partition.cells() || j >= partition.cells() || i == j) {
    throw ContractViolation("facet needs two distinct valid cells");
  }
  const Eigen::VectorXd dz =
      (partition.directions().row(j) - partition.directions().row(i)).transpose();
  const double dc = partition.offsets()(i) - partition.offsets()(j);
  const double len = dz.norm();
  if (len == 0.0) {
    if (dc == 0.0) {
      throw DegenerateError("cells " + std::to_string(i + 1) + " and " + std::to_string(j + 1) +
                            " share the same affine functional");
    }
    return std::nullopt;
  }
  InterfaceFacet facet;
  facet.i = i;
  facet.j = j;
  facet.normal = dz / len;
  facet.offset = dc / len;
  const int d = partition.dimension();
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(facet.normal).householderQ();
  facet.basis = q.rightCols(d - 1);
  return facet;
}

bool on_interface(const AffinePartition& partition, int i, int j, const Eigen::VectorXd& x) {
  const Eigen::VectorXd s = partition.scores(x);
  double others = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < s.size(); ++k) {
    if (k != i && k != j) others = std::max(others, s(k));
  }
  return others <= std::min(s(i), s(j)) + kJointTolerance &&
         std::abs(s(i) - s(j)) <= kJointTolerance * (1.0 + std::abs(s(i)));
}

std::string to_string(PerimeterMethod method) {
  switch (method) {
    case PerimeterMethod::facet:
      return "facet";
    case PerimeterMethod::minkowski:
      return "minkowski";
    case PerimeterMethod::closed_form:
      return "closed-form";
  }
  return "unknown";
}

namespace {

struct RadialCut {
  Eigen::VectorXd center;
  double radius;
};

// Joint-argmax test for points known to lie on the (i, j) hyperplane.
Eigen::Array<bool, Eigen::Dynamic, 1> joint_argmax(const AffinePartition& partition, int i, int j,
                                                   const Eigen::MatrixXd& points) {
  Eigen::MatrixXd s = partition.directions() * points;
  s.colwise() += partition.offsets();
  Eigen::Array<bool, Eigen::Dynamic, 1> member(points.cols());
  for (Eigen::Index col = 0; col < points.cols(); ++col) {
    double others = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < s.rows(); ++k) {
      if (k != i && k != j) others = std::max(others, s(k, col));
    }
    member(col) = others <= std::min(s(i, col), s(j, col)) + kJointTolerance;
  }
  return member;
}

struct PairSampler {
  int i = 0;
  int j = 0;
  std::uint32_t stream = 0;
  std::optional<InterfaceFacet> facet;
  double weight = 0.0;

  // weight * 1{joint argmax} for each sample of the chunk. The hyperplane is
  // sampled by projecting a d-dimensional Gaussian onto it, which needs no
  // basis and treats rotated partitions identically.
  Eigen::RowVectorXd values(const AffinePartition& partition, const IntegrationConfig& cfg,
                            std::uint64_t chunk, const std::optional<RadialCut>& cut) const {
    if (!facet) return Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(cfg.chunk_size));
    return values(partition, gaussian_block(cfg, chunk, stream, partition.dimension()), cut);
  }

  Eigen::RowVectorXd values(const AffinePartition& partition, Eigen::MatrixXd pts,
                            const std::optional<RadialCut>& cut) const {
    if (!facet) return Eigen::RowVectorXd::Zero(pts.cols());
    const Eigen::VectorXd& n = facet->normal;
    const Eigen::RowVectorXd along = n.transpose() * pts;
    pts -= n * along;
    pts.colwise() += facet->offset * n;
    Eigen::Array<bool, Eigen::Dynamic, 1> member = joint_argmax(partition, i, j, pts);
    if (cut) {
      member = member &&
               ((pts.colwise() - cut->center).colwise().norm().array() > cut->radius).transpose();
    }
    return weight * member.cast<double>().transpose().matrix();
  }
};

std::vector<PairSampler> pair_samplers(const AffinePartition& partition) {
  std::vector<PairSampler> out;
  std::uint32_t pair_index = 0;
  for (int i = 0; i < partition.cells(); ++i) {
    for (int j = i + 1; j < partition.cells(); ++j, ++pair_index) {
      PairSampler ps;
      ps.i = i;
      ps.j = j;
      ps.stream = stream_id(Stream::facet_base, pair_index);
      ps.facet = interface_facet(partition, i, j);
      if (ps.facet) ps.weight = gaussian_density_1d(ps.facet->offset);
      out.push_back(std::move(ps));
    }
  }
  return out;
}

void check_dimension(const AffinePartition& partition, const IntegrationConfig& cfg) {
  cfg.validate();
  if (cfg.dimension != partition.dimension()) {
    throw ContractViolation("integration dimension does not match the partition");
  }
}

double exact_point_mass(const AffinePartition& partition, const PairSampler& ps,
                        const std::optional<RadialCut>& cut) {
  if (!ps.facet) return 0.0;
  const Eigen::MatrixXd pts = ps.facet->offset * ps.facet->normal;
  bool member = joint_argmax(partition, ps.i, ps.j, pts)(0);
  if (cut) member = member && (pts.col(0) - cut->center).norm() > cut->radius;
  return member ? ps.weight : 0.0;
}

PerimeterReport facet_masses(const AffinePartition& partition, const IntegrationConfig& cfg,
                             const std::optional<RadialCut>& cut) {
  check_dimension(partition, cfg);
  PerimeterReport report;
  report.method = PerimeterMethod::facet;
  double variance = 0.0;
  for (const auto& ps : pair_samplers(partition)) {
    PairMass pm{ps.i, ps.j, 0.0, 0.0};
    if (partition.dimension() == 1) {
      pm.mass = exact_point_mass(partition, ps, cut);
    } else if (ps.facet) {
      const Estimate e = reduce_chunks(cfg, 1, [&](std::uint64_t chunk) {
        return Eigen::MatrixXd(ps.values(partition, cfg, chunk, cut));
      });
      pm.mass = e.mean(0);
      pm.std_error = e.std_error(0);
    }
    report.total += pm.mass;
    variance += pm.std_error * pm.std_error;
    report.pairs.push_back(pm);
  }
  report.std_error = std::sqrt(variance);
  return report;
}

}  // namespace

PerimeterReport facet_perimeter(const AffinePartition& partition, const IntegrationConfig& cfg) {
  return facet_masses(partition, cfg, std::nullopt);
}

PairedPerimeters paired_facet_perimeters(const AffinePartition& reference,
                                         const AffinePartition& candidate,
                                         const IntegrationConfig& cfg) {
  if (reference.cells() != candidate.cells() || reference.dimension() != candidate.dimension()) {
    throw ContractViolation("paired perimeters need equal cell counts and dimensions");
  }
  if (reference.dimension() == 1) {
    PairedPerimeters out{facet_perimeter(reference, cfg), facet_perimeter(candidate, cfg), 0.0, 0.0};
    out.difference = out.candidate.total - out.reference.total;
    return out;
  }
  check_dimension(reference, cfg);
  const auto ref = pair_samplers(reference);
  const auto cand = pair_samplers(candidate);
  const auto pairs = static_cast<Eigen::Index>(ref.size());
  // Rows: reference pairs, candidate pairs, summed difference.
  const Estimate e = reduce_chunks(cfg, 2 * pairs + 1, [&](std::uint64_t chunk) {
    Eigen::MatrixXd values = Eigen::MatrixXd::Zero(2 * pairs + 1, static_cast<Eigen::Index>(cfg.chunk_size));
    for (Eigen::Index p = 0; p < pairs; ++p) {
      const auto& r = ref[static_cast<std::size_t>(p)];
      const auto& c = cand[static_cast<std::size_t>(p)];
      if (!r.facet && !c.facet) continue;
      const Eigen::MatrixXd y = gaussian_block(cfg, chunk, r.stream, reference.dimension());
      values.row(p) = r.values(reference, y, std::nullopt);
      values.row(pairs + p) = c.values(candidate, y, std::nullopt);
      values.row(2 * pairs) += values.row(pairs + p) - values.row(p);
    }
    return values;
  });
  PairedPerimeters out;
  double var_ref = 0.0;
  double var_cand = 0.0;
  for (Eigen::Index p = 0; p < pairs; ++p) {
    const auto& r = ref[static_cast<std::size_t>(p)];
    out.reference.pairs.push_back({r.i, r.j, e.mean(p), e.std_error(p)});
    out.candidate.pairs.push_back({r.i, r.j, e.mean(pairs + p), e.std_error(pairs + p)});
    out.reference.total += e.mean(p);
    out.candidate.total += e.mean(pairs + p);
    var_ref += e.std_error(p) * e.std_error(p);
    var_cand += e.std_error(pairs + p) * e.std_error(pairs + p);
  }
  out.reference.std_error = std::sqrt(var_ref);
  out.candidate.std_error = std::sqrt(var_cand);
  out.difference = e.mean(2 * pairs);
  out.std_error = e.std_error(2 * pairs);
  return out;
}

// ---------------------------------------------------------------------------

SetGeometry cell_geometry(const AffinePartition& partition, int cell) {
  if (cell < 0 || cell >= partition.cells()) throw ContractViolation("cell index out of range");
  const int d = partition.dimension();
  // Constraints a_k . x + b_k >= 0 with |a_k| = 1, so g_k is a signed distance.
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rhs;
  bool empty = false;
  for (int k = 0; k < partition.cells(); ++k) {
    if (k == cell) continue;
    const Eigen::VectorXd a =
        (partition.directions().row(cell) - partition.directions().row(k)).transpose();
    const double b = partition.offsets()(cell) - partition.offsets()(k);
    const double len = a.norm();
    if (len == 0.0) {
      // Parallel functional: the constraint is either void or empties the
      // cell (ties go to the lower index).
      if (b < 0.0 || (b == 0.0 && k < cell)) empty = true;
      continue;
    }
    rows.push_back(a / len);
    rhs.push_back(b / len);
  }
  const auto count = static_cast<int>(rows.size());
  Eigen::MatrixXd a(count, d);
  Eigen::VectorXd b(count);
  for (int k = 0; k < count; ++k) {
    a.row(k) = rows[static_cast<std::size_t>(k)].transpose();
    b(k) = rhs[static_cast<std::size_t>(k)];
  }

  // Projectors onto the affine hull of each candidate face.
  struct Face {
    Eigen::MatrixXd gain;  // d x |S|
    Eigen::MatrixXd rows;  // |S| x d
    Eigen::VectorXd rhs;
  };
  std::vector<Face> faces;
  for (unsigned mask = 1; count > 0 && mask < (1u << count); ++mask) {
    const int size = std::popcount(mask);
    if (size > d) continue;
    Face f;
    f.rows.resize(size, d);
    f.rhs.resize(size);
    for (int k = 0, r = 0; k < count; ++k) {
      if (mask & (1u << k)) {
        f.rows.row(r) = a.row(k);
        f.rhs(r++) = b(k);
      }
    }
    const Eigen::MatrixXd gram = f.rows * f.rows.transpose();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
    lu.setThreshold(1e-10);
    if (lu.rank() < size) continue;
    f.gain = f.rows.transpose() * lu.inverse();
    faces.push_back(std::move(f));
  }

  SetGeometry g;
  g.dimension = d;
  g.distance = [a, b, faces, empty](const Eigen::VectorXd& x) {
    if (empty) return std::numeric_limits<double>::infinity();
    if (a.rows() == 0) return 0.0;
    const Eigen::VectorXd slack = a * x + b;
    if (slack.minCoeff() >= 0.0) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& f : faces) {
      const Eigen::VectorXd y = x - f.gain * (f.rows * x + f.rhs);
      if ((a * y + b).minCoeff() >= -1e-10) best = std::min(best, (x - y).norm());
    }
    return best;
  };
  return g;
}

SetGeometry cylinder_geometry(const RoundCylinder& cylinder) {
  return {cylinder.ambient_dimension(),
          [cylinder](const Eigen::VectorXd& x) { return cylinder.distance_to_set(x); }};
}

MinkowskiEstimate minkowski_perimeter(const SetGeometry& set, std::span<const double> epsilons,
                                      const IntegrationConfig& cfg) {
  cfg.validate();
  if (epsilons.size() < 3) throw ConfigError("epsilon schedule needs at least three values");
  for (std::size_t k = 0; k < epsilons.size(); ++k) {
    if (!(epsilons[k] > 0.0)) throw ConfigError("epsilon schedule must be positive");
    if (k > 0 && !(epsilons[k] < epsilons[k - 1])) {
      throw ConfigError("epsilon schedule must be strictly decreasing");
    }
  }
  if (set.dimension != cfg.dimension) {
    throw ContractViolation("integration dimension does not match the set");
  }
  const auto n = static_cast<Eigen::Index>(epsilons.size());
  Eigen::MatrixXd design(n, 2);
  for (Eigen::Index k = 0; k < n; ++k) design.row(k) << 1.0, epsilons[static_cast<std::size_t>(k)];
  // Intercept of the least-squares line as a linear functional of the table.
  const Eigen::RowVectorXd intercept =
      (design.transpose() * design).ldlt().solve(design.transpose()).row(0);

  const double widest = epsilons[0];
  const Estimate e = reduce_chunks(cfg, n + 1, [&](std::uint64_t chunk) {
    const Eigen::MatrixXd pts = gaussian_block(cfg, chunk);
    Eigen::MatrixXd values = Eigen::MatrixXd::Zero(n + 1, pts.cols());
    for (Eigen::Index j = 0; j < pts.cols(); ++j) {
      const double dist = set.distance(pts.col(j));
      if (!(dist > 0.0) || dist >= widest) continue;
      for (Eigen::Index k = 0; k < n; ++k) {
        const double eps = epsilons[static_cast<std::size_t>(k)];
        if (dist < eps) values(k, j) = 1.0 / eps;
      }
      values(n, j) = intercept.dot(values.col(j).head(n));
    }
    return values;
  });

  MinkowskiEstimate out;
  for (Eigen::Index k = 0; k < n; ++k) {
    out.table.push_back({epsilons[static_cast<std::size_t>(k)], e.mean(k), e.std_error(k)});
  }
  out.perimeter = e.mean(n);
  out.std_error = e.std_error(n);
  return out;
}

// ---------------------------------------------------------------------------

CylinderMeasures cylinder_closed_forms(const RoundCylinder& c) {
  const int k = c.k();
  const double r = c.radius();
  CylinderMeasures out;
  out.perimeter = sphere_area(k) * std::pow(r, k) *
                  std::pow(2.0 * std::numbers::pi, -0.5 * (k + 1)) * std::exp(-0.5 * r * r);
  out.volume = c.side() == CylinderSide::inside ? regularized_gamma_p(0.5 * (k + 1), 0.5 * r * r)
                                                : regularized_gamma_q(0.5 * (k + 1), 0.5 * r * r);
  return out;
}

double chi_radius(int k, double p) {
  if (k < 0) throw DomainError("k must be >= 0");
  if (!(p > 0.0 && p < 1.0)) throw DomainError("probability must lie in (0, 1)");
  double lo = 0.0;
  double hi = 1.0;
  while (chi_square_cdf(k + 1, hi * hi) < p) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e3) throw DomainError("no finite radius reaches the requested volume");
  }
  for (int iter = 0; iter < 200 && hi - lo > 1e-15 * hi; ++iter) {
    const double mid = 0.5 * (lo + hi);
    (chi_square_cdf(k + 1, mid * mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

SymmetricScan symmetric_scan(double a, int k_max, ScanOrientation orientation) {
  if (!(a > 0.0 && a < 1.0)) throw DomainError("volume must lie in (0, 1)");
  if (k_max < 0) throw DomainError("k_max must be >= 0");
  SymmetricScan scan;
  std::vector<CylinderSide> sides;
  if (orientation != ScanOrientation::outside) sides.push_back(CylinderSide::inside);
  if (orientation != ScanOrientation::inside) sides.push_back(CylinderSide::outside);
  for (int k = 0; k <= k_max; ++k) {
    for (const auto side : sides) {
      ScanRow row;
      row.k = k;
      row.side = side;
      const double p = side == CylinderSide::inside ? a : 1.0 - a;
      try {
        row.radius = chi_radius(k, p);
        row.perimeter = cylinder_closed_forms(RoundCylinder(k, row.radius, k + 1, side)).perimeter;
        row.feasible = std::isfinite(row.perimeter) && row.radius > 0.0;
      } catch (const DomainError&) {
        row.feasible = false;
      }
      if (row.feasible && (scan.best_k < 0 || row.perimeter < scan.best_perimeter)) {
        scan.best_k = k;
        scan.best_side = side;
        scan.best_perimeter = row.perimeter;
      }
      scan.rows.push_back(row);
    }
  }
  return scan;
}

// ---------------------------------------------------------------------------

double sphere_gaussian_measure(int d, double r) {
  if (d < 1) throw DomainError("dimension must be positive");
  return sphere_area(d - 1) * std::pow(r, d - 1) * std::pow(2.0 * std::numbers::pi, -0.5 * d) *
         std::exp(-0.5 * r * r);
}

TailCheck tail_perimeter_check(const AffinePartition& partition, double r,
                               const Eigen::VectorXd& w, const IntegrationConfig& cfg) {
  const int d = partition.dimension();
  if (w.size() != d) throw ContractViolation("shift w has the wrong dimension");
  const double threshold = std::sqrt(static_cast<double>(d)) + w.norm();
  if (!(r > threshold)) {
    throw HypothesisNotMet("tail bound needs r > sqrt(d) + |w| = " + std::to_string(threshold));
  }
  const PerimeterReport tail = facet_masses(partition, cfg, RadialCut{w, r});
  TailCheck out;
  out.tail_mass = tail.total;
  out.std_error = tail.std_error;
  const double sphere = sphere_gaussian_measure(d, r);
  out.bound = 3.0 * partition.cells() * sphere;
  out.proof_bound = 2.0 * partition.cells() * sphere;
  out.pass = out.tail_mass <= out.bound + 3.0 * out.std_error;
  out.pass_proof_bound = out.tail_mass <= out.proof_bound + 3.0 * out.std_error;
  return out;
}

}  // namespace gb
