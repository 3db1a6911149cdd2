#include <cmath>

#include "gauss_bubbles/gauss_core.hpp"
#include "gauss_bubbles/partitions.hpp"
#include "gauss_bubbles/perimeter.hpp"

namespace gb {

DivergenceReport divergence_identity_check(const AffinePartition& partition, int cell,
                                           const IntegrationConfig& cfg) {
  if (cell < 0 || cell >= partition.cells()) throw ContractViolation("cell index out of range");
  const int d = partition.dimension();
  const MomentReport moments =
      mc_moments(partition.cell_map(), Eigen::VectorXd::Zero(d), cfg);

  DivergenceReport out;
  out.volume_integral = moments.moments.col(cell);
  out.surface_integral = Eigen::VectorXd::Zero(d);
  double variance = moments.moment_std_error.col(cell).squaredNorm();
  if (partition.cells() > 1) {
    const PerimeterReport facets = facet_perimeter(partition, cfg);
    for (const PairMass& pm : facets.pairs) {
      if (pm.i != cell && pm.j != cell) continue;
      const auto facet = interface_facet(partition, pm.i, pm.j);
      if (!facet) continue;
      // Outward normal of `cell` across this interface.
      const Eigen::VectorXd outward = pm.i == cell ? facet->normal : Eigen::VectorXd(-facet->normal);
      out.surface_integral += pm.mass * outward;
      variance += pm.std_error * pm.std_error;
    }
  }
  out.residual = out.volume_integral + out.surface_integral;
  out.residual_norm = out.residual.norm();
  out.std_error = std::sqrt(variance);
  return out;
}

DivergenceReport divergence_identity_check(const RoundCylinder&, const IntegrationConfig&) {
  throw UnsupportedGeometry("divergence check needs a polyhedral cell");
}

}  // namespace gb
