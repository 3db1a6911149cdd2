#include "gauss_bubbles/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gauss_bubbles/noise.hpp"
#include "gauss_bubbles/parallel.hpp"

namespace gb {

void OptimizeConfig::validate() const {
  if (cells < 2) throw DomainError("optimization needs m >= 2");
  if (dimension < 1) throw DomainError("dimension must be positive");
  if (dimension < cells - 1) throw DomainError("the affine family needs d >= m - 1");
  if (target.size() != 0) {
    if (target.size() != cells) throw ContractViolation("target volumes must have m entries");
    if ((target.array() <= 0.0).any() || std::abs(target.sum() - 1.0) > 1e-9) {
      throw DomainError("target volumes must be positive and sum to 1");
    }
  }
  if (shift.size() != 0 && shift.size() != dimension) {
    throw ContractViolation("shift w must have d entries");
  }
  if (max_iterations < 1 || restarts < 1) throw ConfigError("iterations and restarts must be positive");
  if (!(tolerance >= 0.0) || !(step_tolerance >= 0.0) || !(initial_step > 0.0)) {
    throw ConfigError("tolerances must be nonnegative and the initial step positive");
  }
  if (!(calibration.tolerance > 0.0)) throw ConfigError("calibration tolerance must be positive");
  search_config().validate();
  final_config().validate();
}

Eigen::VectorXd OptimizeConfig::volumes() const {
  if (target.size() != 0) return target;
  return Eigen::VectorXd::Constant(cells, 1.0 / cells);
}

Eigen::VectorXd OptimizeConfig::moment_shift() const {
  if (shift.size() != 0) return shift;
  return Eigen::VectorXd::Zero(dimension);
}

IntegrationConfig OptimizeConfig::search_config() const {
  IntegrationConfig c;
  c.sample_count = search_samples;
  c.chunk_size = chunk_size;
  c.dimension = dimension;
  c.seed = seed ^ 0x9E3779B97F4A7C15ull;
  return c;
}

IntegrationConfig OptimizeConfig::final_config() const {
  IntegrationConfig c;
  c.sample_count = final_samples;
  c.chunk_size = chunk_size;
  c.dimension = dimension;
  c.seed = seed;
  return c;
}

ScalarEstimate moment_objective(const AffinePartition& partition, const Eigen::VectorXd& w,
                                const IntegrationConfig& cfg) {
  const MomentReport r = mc_moments(partition.cell_map(), w, cfg);
  return {r.moment_functional, r.moment_functional_std_error};
}

namespace {

constexpr double kInfeasible = std::numeric_limits<double>::infinity();
constexpr int kStartAttempts = 16;

struct Vertex {
  Eigen::VectorXd x;
  double f = kInfeasible;
  double residual = kInfeasible;
  Eigen::VectorXd offsets;
};

class Objective {
 public:
  Objective(const OptimizeConfig& cfg, double epsilon, bool penalized)
      : cfg_(cfg),
        cache_(cfg.search_config()),
        target_(cfg.volumes()),
        w_(cfg.moment_shift()),
        epsilon_(epsilon),
        penalized_(penalized) {}

  Eigen::MatrixXd directions(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd dirs(cfg_.cells, cfg_.dimension);
    for (int i = 0; i < cfg_.cells; ++i) {
      dirs.row(i) = x.segment(i * cfg_.dimension, cfg_.dimension).transpose();
    }
    return dirs;
  }

  // Normalizes the direction rows of v.x in place and fills f, residual.
  void evaluate(Vertex& v) const {
    v.f = kInfeasible;
    v.residual = kInfeasible;
    Eigen::MatrixXd dirs = directions(v.x);
    for (int i = 0; i < cfg_.cells; ++i) {
      const double len = dirs.row(i).norm();
      if (!(len > 1e-12) || !std::isfinite(len)) return;
      dirs.row(i) /= len;
      v.x.segment(i * cfg_.dimension, cfg_.dimension) = dirs.row(i).transpose();
    }
    for (int i = 0; i < cfg_.cells; ++i) {
      for (int j = i + 1; j < cfg_.cells; ++j) {
        if ((dirs.row(i) - dirs.row(j)).norm() < 1e-6) return;
      }
    }
    try {
      const AffinePartition start(dirs, Eigen::VectorXd::Zero(cfg_.cells));
      const AffinePartition p = calibrate_offsets_to_volumes(start, target_, cache_, cfg_.calibration);
      const MomentReport mom = mc_moments(p.cell_map(), w_, cache_);
      double value = -mom.moment_functional;
      if (penalized_) {
        value = facet_perimeter(p, cache_.config()).total + epsilon_ * kPenaltyScale * mom.moment_functional;
      }
      v.f = value;
      v.residual = (mom.volumes - target_).cwiseAbs().maxCoeff();
      v.offsets = p.offsets();
    } catch (const Error&) {
      v.f = kInfeasible;
    }
  }

  double reported(double f) const { return penalized_ ? f : -f; }

 private:
  const OptimizeConfig& cfg_;
  SampleCache cache_;
  Eigen::VectorXd target_;
  Eigen::VectorXd w_;
  double epsilon_;
  bool penalized_;
};

struct RestartOutcome {
  RestartSummary summary;
  Vertex best;
  std::vector<TraceRow> trace;
};

RestartOutcome nelder_mead(const Objective& objective, const OptimizeConfig& cfg, int restart) {
  const int n = cfg.cells * cfg.dimension;
  IntegrationConfig start_cfg;
  start_cfg.sample_count = static_cast<std::uint64_t>(cfg.restarts);
  start_cfg.chunk_size = 1;
  start_cfg.seed = cfg.seed;
  start_cfg.dimension = n;
  // Later draws of the same stream replace an infeasible start.
  Eigen::VectorXd x0;
  for (int attempt = 0; attempt < kStartAttempts; ++attempt) {
    const auto chunk = static_cast<std::uint64_t>(restart + attempt * cfg.restarts);
    Vertex probe;
    probe.x = gaussian_block(start_cfg, chunk, stream_id(Stream::restart), n).col(0);
    if (attempt == 0) x0 = probe.x;
    objective.evaluate(probe);
    if (std::isfinite(probe.f)) {
      x0 = probe.x;
      break;
    }
  }

  std::vector<Vertex> simplex(static_cast<std::size_t>(n + 1));
  for (int k = 0; k <= n; ++k) {
    Vertex& v = simplex[static_cast<std::size_t>(k)];
    v.x = x0;
    if (k > 0) v.x(k - 1) += cfg.initial_step;
    objective.evaluate(v);
  }

  RestartOutcome out;
  out.summary.restart = restart;
  auto by_value = [](const Vertex& a, const Vertex& b) { return a.f < b.f; };
  auto make = [&](const Eigen::VectorXd& x) {
    Vertex v;
    v.x = x;
    objective.evaluate(v);
    return v;
  };

  int iter = 0;
  for (; iter < cfg.max_iterations; ++iter) {
    std::stable_sort(simplex.begin(), simplex.end(), by_value);
    const Vertex& best = simplex.front();
    out.trace.push_back({restart, iter, objective.reported(best.f), best.residual});
    if (!std::isfinite(best.f)) break;
    const Vertex& worst = simplex.back();
    if (std::isfinite(worst.f) && worst.f - best.f <= cfg.tolerance) {
      double diameter = 0.0;
      for (const auto& v : simplex) diameter = std::max(diameter, (v.x - best.x).norm());
      if (diameter <= cfg.step_tolerance) {
        out.summary.converged = true;
        break;
      }
    }
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int k = 0; k < n; ++k) centroid += simplex[static_cast<std::size_t>(k)].x;
    centroid /= n;

    Vertex reflected = make(centroid + (centroid - worst.x));
    if (reflected.f < best.f) {
      Vertex expanded = make(centroid + 2.0 * (centroid - worst.x));
      simplex.back() = expanded.f < reflected.f ? std::move(expanded) : std::move(reflected);
      continue;
    }
    if (reflected.f < simplex[static_cast<std::size_t>(n - 1)].f) {
      simplex.back() = std::move(reflected);
      continue;
    }
    const bool outside = reflected.f < worst.f;
    Vertex contracted = make(outside ? Eigen::VectorXd(centroid + 0.5 * (reflected.x - centroid))
                                     : Eigen::VectorXd(centroid + 0.5 * (worst.x - centroid)));
    if (contracted.f < std::min(reflected.f, worst.f)) {
      simplex.back() = std::move(contracted);
      continue;
    }
    for (int k = 1; k <= n; ++k) {
      Vertex& v = simplex[static_cast<std::size_t>(k)];
      v = make(simplex.front().x + 0.5 * (v.x - simplex.front().x));
    }
  }
  std::stable_sort(simplex.begin(), simplex.end(), by_value);
  out.best = simplex.front();
  out.summary.iterations = iter;
  out.summary.feasible = std::isfinite(out.best.f);
  out.summary.objective = objective.reported(out.best.f);
  if (!out.summary.feasible) out.summary.failure = "no feasible iterate (calibration failed everywhere)";
  return out;
}

OptimizeResult run_search(const OptimizeConfig& cfg, double epsilon, bool penalized) {
  cfg.validate();
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw DomainError("epsilon must be >= 0");
  const Objective objective(cfg, epsilon, penalized);
  const auto outcomes = map_indices<RestartOutcome>(
      static_cast<std::uint64_t>(cfg.restarts),
      [&](std::uint64_t r) { return nelder_mead(objective, cfg, static_cast<int>(r)); });

  std::vector<TraceRow> trace;
  std::vector<RestartSummary> summaries;
  const RestartOutcome* winner = nullptr;
  for (const auto& o : outcomes) {
    trace.insert(trace.end(), o.trace.begin(), o.trace.end());
    summaries.push_back(o.summary);
    if (o.summary.feasible && (winner == nullptr || o.best.f < winner->best.f)) winner = &o;
  }
  if (winner == nullptr) throw OptimizationFailure("every restart failed calibration", trace);

  const Eigen::VectorXd target = cfg.volumes();
  const Eigen::VectorXd w = cfg.moment_shift();
  const IntegrationConfig final_cfg = cfg.final_config();
  const SampleCache final_cache(final_cfg);
  const AffinePartition searched(objective.directions(winner->best.x), winner->best.offsets);
  AffinePartition best = calibrate_offsets_to_volumes(searched, target, final_cache, cfg.calibration);

  AffinePartition reference = simplicial_cone_partition(cfg.cells, Eigen::VectorXd::Zero(cfg.dimension));
  if ((target.array() - 1.0 / cfg.cells).abs().maxCoeff() > 1e-12) {
    reference = calibrate_offsets_to_volumes(reference, target, final_cache, cfg.calibration);
  }

  OptimizeResult result(std::move(best), std::move(reference));
  result.epsilon = epsilon;
  result.restarts = std::move(summaries);
  result.trace = std::move(trace);
  result.moments = mc_moments(result.best.cell_map(), w, final_cache);
  result.volume_residual = (result.moments.volumes - target).cwiseAbs().maxCoeff();
  if (penalized) {
    result.perimeter = facet_perimeter(result.best, final_cfg);
    const double pen = epsilon * kPenaltyScale;
    result.objective = result.perimeter->total + pen * result.moments.moment_functional;
    result.objective_std_error =
        std::hypot(result.perimeter->std_error, pen * result.moments.moment_functional_std_error);
  } else {
    result.objective = result.moments.moment_functional;
    result.objective_std_error = result.moments.moment_functional_std_error;
  }
  result.alignment = align_rotation(result.reference, result.best, final_cfg);
  return result;
}

}  // namespace

OptimizeResult optimize_propeller(const OptimizeConfig& cfg) { return run_search(cfg, 0.0, false); }

OptimizeResult minimize_penalized_perimeter(const OptimizeConfig& cfg, double epsilon) {
  return run_search(cfg, epsilon, true);
}

std::string to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::pass:
      return "pass";
    case Verdict::fail:
      return "fail";
    case Verdict::inconclusive:
      return "inconclusive";
  }
  return "unknown";
}

double certificate_margin(const StabilityCertificate& c) {
  return (c.perimeter_candidate + c.epsilon * kPenaltyScale * c.moment_candidate) -
         (c.perimeter_reference + c.epsilon * kPenaltyScale * c.moment_reference);
}

Verdict certificate_verdict(double margin, double std_error) {
  if (std::abs(margin) <= 3.0 * std_error) return Verdict::inconclusive;
  return margin > 0.0 ? Verdict::pass : Verdict::fail;
}

StabilityCertificate stability_margin(const AffinePartition& reference,
                                      const AffinePartition& candidate, double epsilon,
                                      const Eigen::VectorXd& w, const IntegrationConfig& cfg,
                                      double volume_tolerance) {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw DomainError("epsilon must be >= 0");
  if (reference.cells() != candidate.cells()) {
    throw PreconditionError("reference has " + std::to_string(reference.cells()) +
                            " cells but the candidate has " + std::to_string(candidate.cells()));
  }
  if (reference.dimension() != candidate.dimension()) {
    throw PreconditionError("reference and candidate live in different dimensions");
  }
  require_matching_volumes(reference, candidate, cfg, volume_tolerance);

  const PairedPerimeters perimeters = paired_facet_perimeters(reference, candidate, cfg);
  const PerimeterReport& pr = perimeters.reference;
  const PerimeterReport& pc = perimeters.candidate;
  const SampleCache cache(cfg);
  const MomentReport mr = mc_moments(reference.cell_map(), w, cache);
  const MomentReport mc = mc_moments(candidate.cell_map(), w, cache);

  StabilityCertificate c;
  c.epsilon = epsilon;
  c.perimeter_reference = pr.total;
  c.perimeter_reference_std_error = pr.std_error;
  c.perimeter_candidate = pc.total;
  c.perimeter_candidate_std_error = pc.std_error;
  c.moment_reference = mr.moment_functional;
  c.moment_reference_std_error = mr.moment_functional_std_error;
  c.moment_candidate = mc.moment_functional;
  c.moment_candidate_std_error = mc.moment_functional_std_error;
  c.margin = certificate_margin(c);
  c.perimeter_difference_std_error = perimeters.std_error;
  const double pen = epsilon * kPenaltyScale;
  c.std_error = std::sqrt(c.perimeter_difference_std_error * c.perimeter_difference_std_error +
                          pen * pen * (mr.moment_functional_std_error * mr.moment_functional_std_error +
                                       mc.moment_functional_std_error * mc.moment_functional_std_error));
  c.verdict = certificate_verdict(c.margin, c.std_error);
  return c;
}

}  // namespace gb
