#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "gauss_bubbles/discrete.hpp"
#include "gauss_bubbles/harness.hpp"
#include "gauss_bubbles/noise.hpp"
#include "gauss_bubbles/optimize.hpp"
#include "gauss_bubbles/parallel.hpp"
#include "gauss_bubbles/perimeter.hpp"
#include "oracles.hpp"

using namespace gb;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

void note(Outcome& o, bool ok, const std::string& text) {
  o.pass = o.pass && ok;
  if (!o.detail.empty()) o.detail += "; ";
  o.detail += (ok ? "" : "FAILED ") + text;
}

IntegrationConfig config(std::uint64_t samples, std::uint64_t seed, int d) {
  IntegrationConfig cfg;
  cfg.sample_count = samples;
  cfg.seed = seed;
  cfg.dimension = d;
  return cfg;
}

AffinePartition propeller() { return simplicial_cone_partition(3, Eigen::VectorXd::Zero(2)); }

double relative(double value, double expected) { return std::abs(value - expected) / std::abs(expected); }

const double kPropellerPerimeter = 3.0 / (2.0 * std::sqrt(2.0 * std::numbers::pi));
const double kPropellerMoment = 9.0 / (8.0 * std::numbers::pi);

Outcome propeller_perimeter() {
  Outcome o;
  const IntegrationConfig cfg = config(1'000'000, 1, 2);
  const PerimeterReport facet = facet_perimeter(propeller(), cfg);
  note(o, relative(facet.total, kPropellerPerimeter) <= 0.01,
       fmt("facet %.6f vs %.6f (rel %.2e, tol 1e-2)", facet.total, kPropellerPerimeter,
           relative(facet.total, kPropellerPerimeter)));
  const std::vector<double> eps = {0.1, 0.05, 0.025};
  double mink = 0.0;
  for (int cell = 0; cell < 3; ++cell) mink += minkowski_perimeter(cell_geometry(propeller(), cell), eps, cfg).perimeter;
  mink *= 0.5;
  note(o, relative(mink, facet.total) <= 0.02,
       fmt("minkowski %.6f vs facet (rel %.2e, tol 2e-2)", mink, relative(mink, facet.total)));
  return o;
}

Outcome moment_functional() {
  Outcome o;
  const MomentReport r = mc_moments(propeller().cell_map(), Eigen::Vector2d::Zero(), config(1'000'000, 2, 2));
  note(o, relative(r.moment_functional, kPropellerMoment) <= 0.01,
       fmt("M %.6f vs %.6f (rel %.2e, tol 1e-2)", r.moment_functional, kPropellerMoment,
           relative(r.moment_functional, kPropellerMoment)));
  int checked = 0, violations = 0;
  double worst = -1e300;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const int m = 2 + static_cast<int>(s % 5);
    const int d = m - 1 + static_cast<int>((s / 5) % 2);
    const AffinePartition p = perturb(simplicial_cone_partition(m, Eigen::VectorXd::Zero(d)), 0.6, 500 + s);
    const MomentReport q = mc_moments(p.cell_map(), Eigen::VectorXd::Zero(d), config(200'000, 600 + s, d));
    for (int i = 0; i < m; ++i) {
      ++checked;
      const double excess = q.moments.col(i).norm() - kMomentBound - 3.0 * q.moment_std_error.col(i).norm();
      worst = std::max(worst, excess);
      if (excess > 0.0) ++violations;
    }
  }
  note(o, violations == 0,
       fmt("%d cells in 50 partitions, %d above 1/sqrt(2pi)+3sigma (max excess %.2e)", checked, violations, worst));
  return o;
}

Outcome divergence() {
  Outcome o;
  const IntegrationConfig cfg = config(1'000'000, 3, 2);
  for (int cell = 0; cell < 2; ++cell) {
    const DivergenceReport r = divergence_identity_check(halfspace_split(2, 0.0), cell, cfg);
    note(o, r.residual_norm <= 3.0 * r.std_error, fmt("half-space cell %d %.2e <= 3x%.2e", cell + 1, r.residual_norm, r.std_error));
  }
  for (int cell = 0; cell < 3; ++cell) {
    const DivergenceReport r = divergence_identity_check(propeller(), cell, cfg);
    note(o, r.residual_norm <= 3.0 * r.std_error, fmt("propeller cell %d %.2e <= 3x%.2e", cell + 1, r.residual_norm, r.std_error));
  }
  return o;
}

Outcome noise_closed_form() {
  Outcome o;
  const IntegrationConfig cfg = config(1'000'000, 4, 2);
  for (double rho : {0.0, 0.5, 0.9}) {
    const NoiseStabilityReport r = noise_stability_partition(halfspace_split(2, 0.0), rho, cfg);
    const double closed = 0.25 + std::asin(rho) / (2.0 * std::numbers::pi);
    const double quad = oracle::quadrant(rho);
    const bool ok = std::abs(r.per_cell(0) - quad) <= 3.0 * r.per_cell_std_error(0) && std::abs(quad - closed) < 1e-9;
    note(o, ok, fmt("rho %.1f: %.6f vs %.6f (%.2f sigma)", rho, r.per_cell(0), quad,
                    std::abs(r.per_cell(0) - quad) / r.per_cell_std_error(0)));
  }
  return o;
}

Outcome noise_limit() {
  Outcome o;
  const std::vector<double> schedule = {0.9, 0.95, 0.98, 0.99, 0.995, 0.999};
  const IntegrationConfig cfg = config(1'000'000, 5, 2);
  const double half_exact = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  const NoiseLimitEstimate half = perimeter_from_noise_limit(halfspace_split(2, 0.0).cell_map(), schedule, cfg);
  note(o, relative(half.perimeter, half_exact) <= 0.05,
       fmt("half-space %.6f vs %.6f (rel %.2e, tol 5e-2)", half.perimeter, half_exact, relative(half.perimeter, half_exact)));
  const NoiseLimitEstimate prop = perimeter_from_noise_limit(propeller().cell_map(), schedule, cfg);
  note(o, relative(prop.perimeter, kPropellerPerimeter) <= 0.07,
       fmt("propeller %.6f vs %.6f (rel %.2e, tol 7e-2)", prop.perimeter, kPropellerPerimeter,
           relative(prop.perimeter, kPropellerPerimeter)));
  return o;
}

DiscreteFunction random_function(int m, int n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd t(static_cast<Eigen::Index>(cube_size(m, n)), m);
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    for (int j = 0; j < m; ++j) t(r, j) = u(gen);
    t.row(r) /= t.row(r).sum();
  }
  return DiscreteFunction(m, n, t);
}

Outcome discrete_engine() {
  Outcome o;
  double worst = 0.0;
  int cases = 0;
  for (int m = 2; m <= 81; ++m) {
    for (int n = 1; std::pow(m, n) <= 81; ++n) {
      for (const auto& f : {plurality_function(m, n), dictator_function(m, n), random_function(m, n, 97 * m + n)}) {
        std::vector<std::vector<double>> rows;
        for (Eigen::Index r = 0; r < f.table().rows(); ++r) {
          rows.emplace_back();
          for (int j = 0; j < m; ++j) rows.back().push_back(f.table()(r, j));
        }
        for (double rho : {0.0, 0.3, 0.7, 1.0}) {
          worst = std::max(worst, std::abs(discrete_noise_stability(f, rho).total - oracle::brute_force_stability(rows, m, n, rho)));
          ++cases;
        }
      }
    }
  }
  note(o, worst <= 1e-12, fmt("%d brute-force cases, max |diff| %.2e (tol 1e-12)", cases, worst));
  double dict = 0.0;
  for (double rho : {0.0, 0.25, 0.5, 0.9, 1.0}) {
    dict = std::max(dict, std::abs(discrete_noise_stability(dictator_function(2, 1), rho).total - (1.0 + rho) / 2.0));
  }
  note(o, dict <= 1e-15, fmt("dictator max |S - (1+rho)/2| %.2e", dict));
  double rows = 0.0;
  for (int m = 2; m <= 12; ++m) {
    for (double rho : {-1.0 / (m - 1), 0.0, 0.3, 0.7, 1.0}) {
      const Eigen::MatrixXd k = NoiseKernel(m, rho).matrix();
      rows = std::max(rows, (k.rowwise().sum().array() - 1.0).abs().maxCoeff());
    }
  }
  note(o, rows <= 1e-15, fmt("kernel max |row sum - 1| %.2e (tol 1e-15)", rows));
  return o;
}

Outcome clt() {
  Outcome o;
  const CltCrosscheck c = clt_crosscheck(1001, 0.5, config(1'000'000, 7, 1));
  note(o, std::abs(c.gap) <= 0.01, fmt("S(MAJ_1001) %.5f vs %.5f (gap %.2e +- %.1e, tol 1e-2)", c.discrete, c.gaussian, c.gap, c.std_error));
  return o;
}

Outcome optimizer() {
  Outcome o;
  OptimizeConfig oc;
  oc.seed = 8;
  const OptimizeResult r = optimize_propeller(oc);
  note(o, relative(r.objective, kPropellerMoment) <= 0.01,
       fmt("m=3 M* %.6f vs %.6f (rel %.2e, tol 1e-2)", r.objective, kPropellerMoment, relative(r.objective, kPropellerMoment)));
  note(o, r.alignment.misalignment <= 0.02, fmt("misalignment %.2e (tol 2e-2)", r.alignment.misalignment));

  OptimizeConfig line;
  line.cells = 2;
  line.dimension = 1;
  line.seed = 8;
  line.target = Eigen::Vector2d(oracle::Phi(1.0), 1.0 - oracle::Phi(1.0));
  const OptimizeResult s = optimize_propeller(line);
  const Eigen::MatrixXd& z = s.best.directions();
  const Eigen::VectorXd& c = s.best.offsets();
  const double t = (c(1) - c(0)) / (z(0, 0) - z(1, 0));
  // Cell 0 is the larger cell; find which side of t it lies on.
  const double expected = z(0, 0) > z(1, 0) ? -1.0 : 1.0;
  const double a = line.target(0);
  const double band = (3.0 * std::sqrt(a * (1.0 - a) / static_cast<double>(line.final_samples)) + line.calibration.tolerance) /
                      oracle::phi(1.0);
  note(o, s.volume_residual <= line.calibration.tolerance,
       fmt("m=2 volume residual %.1e (tol %.0e)", s.volume_residual, line.calibration.tolerance));
  note(o, std::abs(t - expected) <= band, fmt("threshold %.5f vs %.0f (band %.1e)", t, expected, band));
  return o;
}

double median_of(std::vector<double> v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  const double upper = *mid;
  if (v.size() % 2 == 1) return upper;
  return 0.5 * (upper + *std::max_element(v.begin(), mid));
}

double spread(const std::vector<double>& v) {
  double mean = 0.0, var = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  for (double x : v) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(v.size() - 1));
}

Outcome certificates() {
  Outcome o;
  const AffinePartition ref = propeller();
  const CalibrationOptions cal{2e-5, 0.5, 400};
  std::vector<double> margins, errors;
  int below = 0, passes = 0, positive = 0;
  double worst = 1e300;
  for (int k = 0; k < 100; ++k) {
    const IntegrationConfig cfg = config(1'000'000, 2000 + k, 2);
    const Eigen::VectorXd volumes = mc_volumes(ref.cell_map(), cfg).volumes;
    const double magnitude = 0.02 + 0.18 * k / 99.0;
    const AffinePartition cand = calibrate_offsets_to_volumes(perturb(ref, magnitude, 1000 + k), volumes, cfg, cal);
    const StabilityCertificate c = stability_margin(ref, cand, 1e-3, Eigen::Vector2d::Zero(), cfg);
    margins.push_back(c.margin);
    errors.push_back(c.std_error);
    worst = std::min(worst, c.margin / c.std_error);
    if (c.margin < -3.0 * c.std_error) ++below;
    if (c.verdict == Verdict::pass) ++passes;
    if (c.margin > 0.0) ++positive;
  }
  const double median = median_of(margins);
  // Monte Carlo error of the median: redraw each margin within its own sigma.
  std::mt19937_64 gen(20240601);
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<std::size_t> pick(0, margins.size() - 1);
  std::vector<double> noisy, resampled;
  for (int b = 0; b < 4000; ++b) {
    std::vector<double> v(margins.size()), w(margins.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = margins[i] + errors[i] * normal(gen);
    for (auto& x : w) x = margins[pick(gen)];
    noisy.push_back(median_of(v));
    resampled.push_back(median_of(w));
  }
  const double mc_se = spread(noisy);
  const double population_se = spread(resampled);
  note(o, below == 0, fmt("%d of 100 margins below -3 sigma (min margin/sigma %.2f)", below, worst));
  note(o, median > 3.0 * mc_se,
       fmt("median margin %.3e > 3 x MC se %.1e (%.1f sigma); %d positive, %d individually > 3 sigma, "
           "median/bootstrap-over-perturbations se %.1f",
           median, mc_se, median / mc_se, positive, passes, median / population_se));
  return o;
}

Outcome symmetric_candidates() {
  Outcome o;
  // The slab |x_1| < 1 is the k = 0 cylinder and has flat boundaries.
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(3, 3);
  z(0, 0) = 1.0;
  z(2, 0) = -1.0;
  const AffinePartition slab(z, Eigen::Vector3d(-1.0, 0.0, -1.0));
  const CylinderMeasures flat = cylinder_closed_forms(RoundCylinder(0, 1.0, 3));
  const PerimeterReport facet = facet_perimeter(slab, config(1'000'000, 9, 3));
  const double slab_perimeter = facet.pairs[0].mass + facet.pairs[2].mass;
  note(o, relative(slab_perimeter, flat.perimeter) <= 0.01,
       fmt("k=0 facet perimeter rel %.1e", relative(slab_perimeter, flat.perimeter)));
  // 1.6e7 samples put 3 sigma of the Minkowski fit below the 1% band.
  const IntegrationConfig cfg = config(16'000'000, 10, 3);
  const std::vector<double> eps = {0.08, 0.06, 0.04, 0.02};
  for (int k = 0; k <= 2; ++k) {
    const RoundCylinder c(k, 1.0, 3);
    const CylinderMeasures exact = cylinder_closed_forms(c);
    const double vol = mc_volumes(c.cell_map(), cfg).volumes(0);
    const MinkowskiEstimate per = minkowski_perimeter(cylinder_geometry(c), eps, cfg);
    note(o, relative(vol, exact.volume) <= 0.01 && relative(per.perimeter, exact.perimeter) <= 0.01,
         fmt("k=%d volume rel %.1e, minkowski perimeter rel %.1e (sigma %.1e)", k, relative(vol, exact.volume),
             relative(per.perimeter, exact.perimeter), per.std_error / exact.perimeter));
  }
  std::vector<int> best;
  for (int i = 1; i <= 50; ++i) best.push_back(symmetric_scan(0.5 + 0.5 * i / 51.0, 8, ScanOrientation::both).best_k);
  std::vector<int> abandoned;
  int violations = 0;
  std::string path = std::to_string(best[0]);
  for (std::size_t i = 1; i < best.size(); ++i) {
    if (best[i] == best[i - 1]) continue;
    abandoned.push_back(best[i - 1]);
    if (std::find(abandoned.begin(), abandoned.end(), best[i]) != abandoned.end()) ++violations;
    path += fmt("->%d@a=%.3f", best[i], 0.5 + 0.5 * static_cast<double>(i + 1) / 51.0);
  }
  note(o, violations == 0, fmt("argmin k over a in (1/2,1): %s, %d returns to an abandoned k", path.c_str(), violations));
  return o;
}

Outcome tail() {
  Outcome o;
  const TailCheck t = tail_perimeter_check(propeller(), 2.0, Eigen::Vector2d::Zero(), config(1'000'000, 12, 2));
  note(o, std::abs(t.tail_mass - 0.02723) <= 3.0 * t.std_error,
       fmt("tail %.5f vs 0.02723 (%.2f sigma)", t.tail_mass, std::abs(t.tail_mass - 0.02723) / t.std_error));
  note(o, t.tail_mass <= t.bound, fmt("bound 3m %.4f", t.bound));
  return o;
}

Outcome determinism() {
  Outcome o;
  using harness::json;
  const std::vector<std::pair<std::string, json>> specs = {
      {"perimeter", {{"samples", 200000}, {"seed", 1}, {"tail-radius", 2.0}}},
      {"perimeter", {{"samples", 200000}, {"seed", 1}, {"method", "minkowski"}, {"cell", 1}}},
      {"noise-stability", {{"samples", 200000}, {"seed", 2}, {"limit", true}}},
      {"penalty", {{"samples", 200000}, {"seed", 3}}},
      {"discrete", {{"m", 3}, {"n", 4}, {"rho", 0.3}}},
      {"clt-crosscheck", {{"n", 101}, {"samples", 100000}, {"seed", 5}}},
      {"stability-check", {{"perturb", 0.1}, {"samples", 200000}, {"seed", 6}, {"rho", 0.9}}},
      {"optimize-propeller", {{"restarts", 1}, {"max-iter", 30}, {"search-samples", 100000}, {"samples", 100000}, {"seed", 7}}},
  };
  const int original = thread_count();
  int reports = 0, mismatches = 0;
  for (const auto& [command, values] : specs) {
    const harness::ExperimentSpec spec = harness::make_spec(command, values, json::object());
    std::string reference;
    for (int threads : {1, 4, 8}) {
      set_thread_count(threads);
      harness::RunOutcome out = harness::run(spec);
      out.summary["wall_time_s"] = nullptr;
      std::string text = out.summary.dump();
      for (const auto& [name, body] : out.files) text += "\n" + name + "\n" + body;
      if (threads == 1) {
        reference = text;
      } else if (text != reference) {
        ++mismatches;
      }
    }
    ++reports;
  }
  set_thread_count(original);
  note(o, mismatches == 0, fmt("%d commands at 1/4/8 threads, %d byte mismatches", reports, mismatches));
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"propeller perimeter", propeller_perimeter},
      {"moment functional", moment_functional},
      {"divergence identity", divergence},
      {"noise stability closed form", noise_closed_form},
      {"perimeter from the noise limit", noise_limit},
      {"discrete engine", discrete_engine},
      {"majority cross-check", clt},
      {"optimizer", optimizer},
      {"stability margins", certificates},
      {"symmetric scan", symmetric_candidates},
      {"tail decay", tail},
      {"determinism", determinism},
  };
  std::vector<std::size_t> selected;
  for (int a = 1; a < argc; ++a) selected.push_back(std::strtoul(argv[a], nullptr, 10));
  int failed = 0, ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), i + 1) == selected.end()) continue;
    ++ran;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failed;
    std::printf("criterion %2zu %s  %s: %s [%.1f s]\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
