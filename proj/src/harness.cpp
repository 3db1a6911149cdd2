#include "gauss_bubbles/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "gauss_bubbles/discrete.hpp"
#include "gauss_bubbles/io.hpp"
#include "gauss_bubbles/noise.hpp"
#include "gauss_bubbles/optimize.hpp"
#include "gauss_bubbles/partitions.hpp"
#include "gauss_bubbles/perimeter.hpp"

namespace gb::harness {

namespace fs = std::filesystem;

const std::vector<Parameter>& parameters() {
  static const std::vector<Parameter> table = {
      {"partition", Kind::text, "built-in name (propeller3, simplex, halfspace, full) or partition JSON file"},
      {"reference", Kind::text, "reference partition (built-in name or file)"},
      {"candidate", Kind::text, "candidate partition (built-in name or file)"},
      {"samples", Kind::count, "Monte Carlo sample count"},
      {"seed", Kind::count, "64-bit seed"},
      {"chunk", Kind::count, "samples per deterministic chunk"},
      {"antithetic", Kind::flag, "antithetic sampling"},
      {"m", Kind::integer, "number of cells / alphabet size"},
      {"d", Kind::integer, "dimension"},
      {"n", Kind::integer, "number of voters"},
      {"t", Kind::real, "half-space threshold"},
      {"apex", Kind::reals, "apex shift of built-in simplicial cones"},
      {"rho", Kind::reals, "correlation(s)"},
      {"epsilon", Kind::real, "stability weight"},
      {"w", Kind::reals, "shift w of the moment functional"},
      {"a", Kind::reals, "target volume(s)"},
      {"r", Kind::real, "radius"},
      {"kmax", Kind::integer, "largest sphere dimension k"},
      {"orientation", Kind::text, "inside, outside or both"},
      {"method", Kind::text, "facet, minkowski or closed-form"},
      {"cell", Kind::integer, "cell index (1-based)"},
      {"eps", Kind::reals, "Minkowski collar widths, decreasing"},
      {"cylinder-k", Kind::integer, "sphere dimension of a round cylinder"},
      {"tail-radius", Kind::real, "radius of the tail-decay check"},
      {"limit", Kind::flag, "extrapolate the perimeter from the rho schedule"},
      {"action", Kind::text, "discrete action: stability, influence or export"},
      {"function", Kind::text, "plurality, dictator or CSV table file"},
      {"coordinate", Kind::integer, "coordinate index (1-based)"},
      {"unnormalized-kernel", Kind::flag, "use stay probability (1-(m-1) rho)/m (fails unless rho = 0)"},
      {"restarts", Kind::integer, "optimizer restarts"},
      {"max-iter", Kind::integer, "optimizer iterations per restart"},
      {"search-samples", Kind::count, "samples reused by every objective evaluation"},
      {"tol", Kind::real, "objective convergence tolerance"},
      {"calibration-tol", Kind::real, "volume calibration tolerance"},
      {"perturb", Kind::real, "perturbation magnitude applied to the reference"},
      {"perturb-seed", Kind::count, "seed of the perturbation"},
      {"volume-tol", Kind::real, "volume match tolerance"},
      {"allow-any-rho", Kind::flag, "allow rho outside (1/2, 1) in the noise certificate"},
  };
  return table;
}

const std::vector<Command>& commands() {
  static const std::vector<Command> table = {
      {"perimeter", "Gaussian perimeter of a partition (facet or Minkowski) or a round cylinder",
       {"partition", "samples", "seed", "chunk", "antithetic", "m", "d", "t", "apex", "method", "cell",
        "eps", "cylinder-k", "r", "tail-radius", "w"}},
      {"noise-stability", "Ornstein-Uhlenbeck noise stability and the rho -> 1 perimeter limit",
       {"partition", "samples", "seed", "chunk", "antithetic", "m", "d", "t", "apex", "rho", "limit", "cell"}},
      {"penalty", "volumes, moments and the moment penalty sqrt(pi/2) M",
       {"partition", "samples", "seed", "chunk", "antithetic", "m", "d", "t", "apex", "w"}},
      {"optimize-propeller", "maximize M under volume constraints",
       {"samples", "seed", "chunk", "m", "d", "a", "w", "restarts", "max-iter", "search-samples", "tol",
        "calibration-tol"}},
      {"minimize-penalized", "minimize P + epsilon sqrt(pi/2) M under volume constraints",
       {"samples", "seed", "chunk", "m", "d", "a", "w", "epsilon", "restarts", "max-iter",
        "search-samples", "tol", "calibration-tol"}},
      {"discrete", "noise stability and influences on {1..m}^n",
       {"action", "m", "n", "rho", "function", "coordinate", "unnormalized-kernel"}},
      {"symmetric-scan", "round-cylinder candidates r S^k x R^(n-k) of volume a", {"a", "kmax", "orientation"}},
      {"stability-check", "stability certificate of a candidate against a reference partition",
       {"reference", "candidate", "samples", "seed", "chunk", "m", "d", "t", "apex", "epsilon", "w",
        "perturb", "perturb-seed", "volume-tol", "rho", "allow-any-rho", "calibration-tol"}},
      {"clt-crosscheck", "majority on n binary voters against 1/2 + arcsin(rho)/pi",
       {"n", "rho", "samples", "seed", "chunk"}},
  };
  return table;
}

const Parameter& parameter(const std::string& key) {
  for (const auto& p : parameters()) {
    if (p.key == key) return p;
  }
  throw ConfigError("unknown parameter '" + key + "'");
}

const Command& command(const std::string& name) {
  for (const auto& c : commands()) {
    if (c.name == name) return c;
  }
  throw ConfigError("unknown command '" + name + "'");
}

namespace {

double parse_real(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) {
    throw ConfigError("parameter '" + key + "': '" + text + "' is not a number");
  }
  return v;
}

json check_kind(const Parameter& p, const json& value) {
  switch (p.kind) {
    case Kind::integer:
      if (value.is_number_integer()) return value;
      if (value.is_number_float() && std::nearbyint(value.get<double>()) == value.get<double>() &&
          std::abs(value.get<double>()) < 2e9) {
        return static_cast<long long>(value.get<double>());
      }
      break;
    case Kind::count:
      if (value.is_number_unsigned()) return value;
      if (value.is_number_integer() && value.get<long long>() >= 0) return value.get<std::uint64_t>();
      if (value.is_number_float()) {
        const double v = value.get<double>();
        if (v >= 0.0 && v < 1.8e19 && std::nearbyint(v) == v) return static_cast<std::uint64_t>(v);
      }
      break;
    case Kind::real:
      if (value.is_number()) return value.get<double>();
      break;
    case Kind::reals:
      if (value.is_number()) return json::array({value.get<double>()});
      if (value.is_array() && std::all_of(value.begin(), value.end(), [](const json& v) { return v.is_number(); })) {
        json out = json::array();
        for (const auto& v : value) out.push_back(v.get<double>());
        return out;
      }
      break;
    case Kind::text:
      if (value.is_string()) return value;
      break;
    case Kind::flag:
      if (value.is_boolean()) return value;
      break;
  }
  throw ConfigError("parameter '" + p.key + "' has the wrong type (" + value.dump() + ")");
}

}  // namespace

json parse_value(const Parameter& p, const std::string& text) {
  switch (p.kind) {
    case Kind::integer:
    case Kind::count:
    case Kind::real:
      return check_kind(p, parse_real(p.key, text));
    case Kind::reals: {
      json out = json::array();
      std::stringstream ss(text);
      std::string item;
      while (std::getline(ss, item, ',')) out.push_back(parse_real(p.key, item));
      if (out.empty()) throw ConfigError("parameter '" + p.key + "' needs at least one value");
      return out;
    }
    case Kind::text:
      return text;
    case Kind::flag:
      if (text == "true" || text == "1" || text.empty()) return true;
      if (text == "false" || text == "0") return false;
      throw ConfigError("parameter '" + p.key + "' expects true or false");
  }
  return nullptr;
}

namespace {

// ---------------------------------------------------------------------------
// Parameter access on a validated spec.

struct Params {
  const json& j;
  bool has(const std::string& k) const { return j.contains(k); }
  long long integer(const std::string& k) const { return j.at(k).get<long long>(); }
  std::uint64_t count(const std::string& k) const { return j.at(k).get<std::uint64_t>(); }
  double real(const std::string& k) const { return j.at(k).get<double>(); }
  std::string text(const std::string& k) const { return j.at(k).get<std::string>(); }
  bool flag(const std::string& k) const { return has(k) && j.at(k).get<bool>(); }
  std::vector<double> reals(const std::string& k) const { return j.at(k).get<std::vector<double>>(); }
  Eigen::VectorXd vector(const std::string& k) const {
    const auto v = reals(k);
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  double single(const std::string& k) const {
    const auto v = reals(k);
    if (v.size() != 1) throw ConfigError("parameter '" + k + "' takes a single value here");
    return v[0];
  }
};

bool is_builtin(const std::string& name) {
  return name == "propeller3" || name == "simplex" || name == "halfspace" || name == "full";
}

AffinePartition resolve_partition(const std::string& source, const Params& p) {
  if (!is_builtin(source)) return io::read_partition(source);
  if (source == "propeller3" || source == "simplex") {
    const int m = source == "propeller3" ? 3 : static_cast<int>(p.has("m") ? p.integer("m") : 3);
    if (m < 2) throw DomainError("simplicial cones need m >= 2");
    const int d = static_cast<int>(p.has("d") ? p.integer("d") : m - 1);
    if (d < m - 1) throw DomainError("simplicial cones need d >= m - 1");
    Eigen::VectorXd apex = Eigen::VectorXd::Zero(d);
    if (p.has("apex")) {
      apex = p.vector("apex");
      if (apex.size() != d) throw ConfigError("apex needs d values");
    }
    return simplicial_cone_partition(m, apex);
  }
  const int d = static_cast<int>(p.has("d") ? p.integer("d") : 2);
  if (d < 1) throw DomainError("dimension must be positive");
  if (source == "halfspace") return halfspace_split(d, p.has("t") ? p.real("t") : 0.0);
  return full_space(d);
}

IntegrationConfig integration(const Params& p, int dimension) {
  IntegrationConfig cfg;
  cfg.sample_count = p.count("samples");
  cfg.seed = p.count("seed");
  cfg.chunk_size = p.count("chunk");
  cfg.antithetic = p.flag("antithetic");
  cfg.dimension = dimension;
  return cfg;
}

void require_range(bool ok, const std::string& message) {
  if (!ok) throw DomainError(message);
}

Eigen::VectorXd w_for(const Params& p, int d) {
  if (!p.has("w")) return Eigen::VectorXd::Zero(d);
  Eigen::VectorXd w = p.vector("w");
  if (w.size() != d) throw ConfigError("w needs d = " + std::to_string(d) + " values");
  return w;
}

json array_of(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v(k));
  return out;
}

json matrix_rows(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(array_of(m.row(r).transpose()));
  return out;
}

void fill_defaults(const std::string& cmd, json& j) {
  auto def = [&](const char* key, json value) {
    if (!j.contains(key)) j[key] = std::move(value);
  };
  const auto& keys = command(cmd).keys;
  auto uses = [&](const char* key) { return std::find(keys.begin(), keys.end(), key) != keys.end(); };
  if (uses("samples")) def("samples", std::uint64_t{1'000'000});
  if (uses("seed")) def("seed", std::uint64_t{0});
  if (uses("chunk")) def("chunk", std::uint64_t{10'000});
  if (uses("partition")) def("partition", "propeller3");
  if (cmd == "perimeter") {
    def("method", "facet");
  } else if (cmd == "noise-stability") {
    def("rho", j.value("limit", false) ? json::array({0.9, 0.95, 0.98, 0.99, 0.995, 0.999})
                                       : json::array({0.5}));
  } else if (cmd == "optimize-propeller" || cmd == "minimize-penalized") {
    def("m", 3);
    def("d", j.at("m").get<long long>() - 1);
    def("restarts", 4);
    def("max-iter", 300);
    def("search-samples", std::uint64_t{200'000});
    def("tol", 1e-7);
    def("calibration-tol", 2e-5);
    if (cmd == "minimize-penalized") def("epsilon", 1e-3);
  } else if (cmd == "discrete") {
    def("action", "stability");
    def("function", "plurality");
    def("rho", json::array({0.5}));
    def("coordinate", 1);
  } else if (cmd == "symmetric-scan") {
    def("kmax", 3);
    def("orientation", "both");
  } else if (cmd == "stability-check") {
    def("reference", "propeller3");
    def("epsilon", 1e-3);
    def("volume-tol", 1e-3);
    def("perturb-seed", std::uint64_t{1});
    def("calibration-tol", 1e-3);
  } else if (cmd == "clt-crosscheck") {
    def("n", 1001);
    def("rho", json::array({0.5}));
  }
}

// Checks that need no sampling; throws on any inconsistency.
void validate(const std::string& cmd, const Params& p) {
  auto partition_dim = [&](const std::string& key) {
    return resolve_partition(p.text(key), p).dimension();
  };
  if (p.has("samples")) {
    IntegrationConfig cfg = integration(p, 1);
    cfg.validate();
  }
  if (cmd == "perimeter") {
    const std::string method = p.text("method");
    if (method == "closed-form") {
      if (!p.has("cylinder-k") || !p.has("r") || !p.has("d")) {
        throw ConfigError("closed-form perimeter needs cylinder-k, r and d");
      }
      RoundCylinder(static_cast<int>(p.integer("cylinder-k")), p.real("r"), static_cast<int>(p.integer("d")));
      return;
    }
    const bool cylinder = method == "minkowski" && p.has("cylinder-k");
    if (cylinder) {
      if (!p.has("r") || !p.has("d")) throw ConfigError("cylinder perimeter needs cylinder-k, r and d");
      if (p.has("tail-radius")) throw ConfigError("tail-radius applies to partitions only");
      RoundCylinder(static_cast<int>(p.integer("cylinder-k")), p.real("r"), static_cast<int>(p.integer("d")));
    }
    const std::optional<AffinePartition> part =
        cylinder ? std::nullopt : std::optional(resolve_partition(p.text("partition"), p));
    if (method == "minkowski" && !cylinder) {
      if (!p.has("cell")) throw ConfigError("Minkowski perimeter needs a cell or a cylinder");
      require_range(p.integer("cell") >= 1 && p.integer("cell") <= part->cells(), "cell out of range");
    }
    if (method == "minkowski") {
      const auto eps = p.has("eps") ? p.reals("eps") : std::vector<double>{0.1, 0.05, 0.025};
      if (eps.size() < 3) throw ConfigError("epsilon schedule needs at least three values");
      for (std::size_t k = 0; k < eps.size(); ++k) {
        if (!(eps[k] > 0.0) || (k > 0 && !(eps[k] < eps[k - 1]))) {
          throw ConfigError("epsilon schedule must be positive and strictly decreasing");
        }
      }
    } else if (method != "facet") {
      throw ConfigError("method must be facet, minkowski or closed-form");
    }
    if (p.has("tail-radius")) {
      const Eigen::VectorXd w = w_for(p, part->dimension());
      const double threshold = std::sqrt(static_cast<double>(part->dimension())) + w.norm();
      if (!(p.real("tail-radius") > threshold)) {
        throw HypothesisNotMet("tail-radius must exceed sqrt(d) + |w| = " + std::to_string(threshold));
      }
    }
  } else if (cmd == "noise-stability") {
    const AffinePartition part = resolve_partition(p.text("partition"), p);
    const auto rhos = p.reals("rho");
    for (const double r : rhos) require_range(r > -1.0 && r < 1.0, "rho must lie in (-1, 1)");
    if (p.flag("limit")) {
      if (rhos.size() < 3) throw ConfigError("the noise limit needs at least three rho values");
      for (std::size_t k = 0; k < rhos.size(); ++k) {
        require_range(rhos[k] > 0.0, "limit schedule must lie in (0, 1)");
        if (k > 0 && !(rhos[k] > rhos[k - 1])) throw ConfigError("rho schedule must be increasing");
      }
      if (rhos.back() < 0.99) throw ConfigError("rho schedule must reach at least 0.99");
    }
    if (p.has("cell")) require_range(p.integer("cell") >= 1 && p.integer("cell") <= part.cells(), "cell out of range");
  } else if (cmd == "penalty") {
    const AffinePartition part = resolve_partition(p.text("partition"), p);
    w_for(p, part.dimension());
  } else if (cmd == "optimize-propeller" || cmd == "minimize-penalized") {
    OptimizeConfig oc;
    oc.cells = static_cast<int>(p.integer("m"));
    oc.dimension = static_cast<int>(p.integer("d"));
    if (p.has("a")) oc.target = p.vector("a");
    if (p.has("w")) oc.shift = p.vector("w");
    oc.restarts = static_cast<int>(p.integer("restarts"));
    oc.max_iterations = static_cast<int>(p.integer("max-iter"));
    oc.search_samples = p.count("search-samples");
    oc.final_samples = p.count("samples");
    oc.chunk_size = p.count("chunk");
    oc.tolerance = p.real("tol");
    oc.calibration.tolerance = p.real("calibration-tol");
    oc.validate();
    if (cmd == "minimize-penalized") require_range(p.real("epsilon") >= 0.0, "epsilon must be >= 0");
  } else if (cmd == "discrete") {
    if (!p.has("m") || !p.has("n")) throw ConfigError("discrete needs m and n");
    const int m = static_cast<int>(p.integer("m"));
    const int n = static_cast<int>(p.integer("n"));
    require_range(m >= 2 && n >= 1, "discrete needs m >= 2 and n >= 1");
    const std::string action = p.text("action");
    if (action != "stability" && action != "influence" && action != "export") {
      throw ConfigError("discrete action must be stability, influence or export");
    }
    cube_size(m, n);
    const std::string fn = p.text("function");
    if (fn != "plurality" && fn != "dictator" && !fs::exists(fn)) {
      throw ConfigError("function must be plurality, dictator or an existing CSV file");
    }
    if (action == "stability") {
      NoiseKernel(m, p.single("rho"),
                  p.flag("unnormalized-kernel") ? NoiseKernel::Convention::unnormalized
                                         : NoiseKernel::Convention::normalized);
    }
    if (action == "influence") {
      require_range(p.integer("coordinate") >= 1 && p.integer("coordinate") <= n, "coordinate out of range");
    }
  } else if (cmd == "symmetric-scan") {
    if (!p.has("a")) throw ConfigError("symmetric-scan needs a");
    const double a = p.single("a");
    require_range(a > 0.0 && a < 1.0, "a must lie in (0, 1)");
    require_range(p.integer("kmax") >= 0, "kmax must be >= 0");
    const std::string o = p.text("orientation");
    if (o != "inside" && o != "outside" && o != "both") throw ConfigError("orientation must be inside, outside or both");
  } else if (cmd == "stability-check") {
    const int d = partition_dim("reference");
    if (!p.has("candidate") && !p.has("perturb")) throw ConfigError("stability-check needs a candidate or perturb");
    if (p.has("candidate")) {
      const AffinePartition ref = resolve_partition(p.text("reference"), p);
      const AffinePartition cand = resolve_partition(p.text("candidate"), p);
      if (ref.cells() != cand.cells()) {
        throw PreconditionError("reference has " + std::to_string(ref.cells()) + " cells, candidate " +
                                std::to_string(cand.cells()));
      }
      if (ref.dimension() != cand.dimension()) throw PreconditionError("reference and candidate dimensions differ");
    }
    if (p.has("perturb")) require_range(p.real("perturb") >= 0.0, "perturb must be >= 0");
    require_range(p.real("epsilon") >= 0.0, "epsilon must be >= 0");
    w_for(p, d);
    if (p.has("rho")) {
      const double r = p.single("rho");
      if (p.flag("allow-any-rho")) {
        require_range(r > -1.0 && r < 1.0, "rho must lie in (-1, 1)");
      } else {
        require_range(r > 0.5 && r < 1.0, "the noise certificate needs 1/2 < rho < 1");
      }
    }
  } else if (cmd == "clt-crosscheck") {
    const long long n = p.integer("n");
    require_range(n >= 1 && n % 2 == 1, "majority cross-check needs an odd number of voters");
    require_range(n < 65536, "n must be below 65536");
    const double r = p.single("rho");
    require_range(r >= -1.0 && r <= 1.0, "rho must lie in [-1, 1]");
  }
}

// ---------------------------------------------------------------------------
// Command bodies.

struct Body {
  json results = json::object();
  json errors = json::object();
  std::map<std::string, std::string> files;
};

std::string render(const std::function<void(std::ostream&)>& fn) {
  std::ostringstream out;
  fn(out);
  return out.str();
}

Body run_perimeter(const Params& p) {
  Body b;
  const std::string method = p.text("method");
  if (method == "closed-form") {
    const RoundCylinder c(static_cast<int>(p.integer("cylinder-k")), p.real("r"), static_cast<int>(p.integer("d")));
    const CylinderMeasures cm = cylinder_closed_forms(c);
    b.results = {{"method", "closed-form"}, {"perimeter", cm.perimeter}, {"volume", cm.volume}};
    b.errors = {{"perimeter", 0.0}, {"volume", 0.0}};
    return b;
  }
  if (method == "minkowski") {
    const auto eps = p.has("eps") ? p.reals("eps") : std::vector<double>{0.1, 0.05, 0.025};
    MinkowskiEstimate est;
    if (p.has("cylinder-k")) {
      const RoundCylinder c(static_cast<int>(p.integer("cylinder-k")), p.real("r"), static_cast<int>(p.integer("d")));
      const IntegrationConfig cfg = integration(p, c.ambient_dimension());
      est = minkowski_perimeter(cylinder_geometry(c), eps, cfg);
      const VolumeReport v = mc_volumes(c.cell_map(), cfg);
      b.results = {{"method", "minkowski"}, {"perimeter", est.perimeter}, {"volume", v.volumes(0)}};
      b.errors = {{"perimeter", est.std_error}, {"volume", v.std_error(0)}};
    } else {
      const AffinePartition part = resolve_partition(p.text("partition"), p);
      const int cell = static_cast<int>(p.integer("cell")) - 1;
      est = minkowski_perimeter(cell_geometry(part, cell), eps, integration(p, part.dimension()));
      b.results = {{"method", "minkowski"}, {"cell", cell + 1}, {"perimeter", est.perimeter}};
      b.errors = {{"perimeter", est.std_error}};
    }
    json table = json::array();
    for (const auto& row : est.table) {
      table.push_back({{"epsilon", row.epsilon}, {"estimate", row.estimate}, {"std_error", row.std_error}});
    }
    b.results["table"] = table;
    b.files["minkowski.csv"] = render([&](std::ostream& out) {
      out << "epsilon,estimate,std_error\n";
      for (const auto& row : est.table) {
        out << io::format_double(row.epsilon) << ',' << io::format_double(row.estimate) << ','
            << io::format_double(row.std_error) << '\n';
      }
      out << "0," << io::format_double(est.perimeter) << ',' << io::format_double(est.std_error) << '\n';
    });
    return b;
  }
  const AffinePartition part = resolve_partition(p.text("partition"), p);
  const IntegrationConfig cfg = integration(p, part.dimension());
  const PerimeterReport report = facet_perimeter(part, cfg);
  b.results = io::to_json(report);
  b.errors = {{"total", report.std_error}};
  b.files["perimeter.csv"] = render([&](std::ostream& out) {
    io::write_perimeter_csv(out, report);
    out << "total,," << io::format_double(report.total) << ',' << io::format_double(report.std_error)
        << ",facet\n";
  });
  if (p.has("tail-radius")) {
    const TailCheck tc = tail_perimeter_check(part, p.real("tail-radius"), w_for(p, part.dimension()), cfg);
    b.results["tail"] = {{"radius", p.real("tail-radius")},
                         {"tail_mass", tc.tail_mass},
                         {"bound", tc.bound},
                         {"proof_bound", tc.proof_bound},
                         {"pass", tc.pass},
                         {"pass_proof_bound", tc.pass_proof_bound}};
    b.errors["tail_mass"] = tc.std_error;
  }
  return b;
}

Body run_noise(const Params& p) {
  Body b;
  const AffinePartition part = resolve_partition(p.text("partition"), p);
  const IntegrationConfig cfg = integration(p, part.dimension());
  const auto rhos = p.reals("rho");
  if (p.flag("limit")) {
    const NoiseLimitEstimate est =
        p.has("cell") ? set_perimeter_from_noise_limit(part.cell_map(), static_cast<int>(p.integer("cell")) - 1, rhos, cfg)
                      : perimeter_from_noise_limit(part.cell_map(), rhos, cfg);
    json table = json::array();
    for (const auto& row : est.table) {
      table.push_back({{"rho", row.rho}, {"normalized_deficit", row.normalized_deficit}, {"std_error", row.std_error}});
    }
    b.results = {{"perimeter", est.perimeter}, {"table", table}};
    b.errors = {{"perimeter", est.std_error}};
    b.files["noise_limit.csv"] = render([&](std::ostream& out) {
      out << "rho,normalized_deficit,std_error\n";
      for (const auto& row : est.table) {
        out << io::format_double(row.rho) << ',' << io::format_double(row.normalized_deficit) << ','
            << io::format_double(row.std_error) << '\n';
      }
    });
    return b;
  }
  std::vector<NoiseStabilityReport> reports;
  json rows = json::array();
  json errs = json::array();
  for (const double rho : rhos) {
    reports.push_back(noise_stability_partition(part, rho, cfg));
    rows.push_back(io::to_json(reports.back()));
    errs.push_back(reports.back().total_std_error);
  }
  b.results = {{"rows", rows}};
  b.errors = {{"total", errs}};
  b.files["noise.csv"] = render([&](std::ostream& out) { io::write_noise_csv(out, reports); });
  return b;
}

Body run_penalty(const Params& p) {
  Body b;
  const AffinePartition part = resolve_partition(p.text("partition"), p);
  const IntegrationConfig cfg = integration(p, part.dimension());
  const MomentReport r = mc_moments(part.cell_map(), w_for(p, part.dimension()), cfg);
  json norms = json::array();
  for (Eigen::Index i = 0; i < r.moments.cols(); ++i) norms.push_back(r.moments.col(i).norm());
  b.results = {{"volumes", array_of(r.volumes)},
               {"moments", matrix_rows(r.moments.transpose())},
               {"moment_norms", norms},
               {"moment_bound", kMomentBound},
               {"moment_functional", r.moment_functional},
               {"penalty", r.penalty}};
  b.errors = {{"volumes", array_of(r.volume_std_error)},
              {"moments", matrix_rows(r.moment_std_error.transpose())},
              {"moment_functional", r.moment_functional_std_error},
              {"penalty", r.penalty_std_error}};
  b.files["moments.csv"] = render([&](std::ostream& out) {
    out << "cell,volume,volume_std_error";
    for (Eigen::Index k = 0; k < r.moments.rows(); ++k) out << ",z" << k + 1;
    out << ",norm\n";
    for (Eigen::Index i = 0; i < r.moments.cols(); ++i) {
      out << i + 1 << ',' << io::format_double(r.volumes(i)) << ',' << io::format_double(r.volume_std_error(i));
      for (Eigen::Index k = 0; k < r.moments.rows(); ++k) out << ',' << io::format_double(r.moments(k, i));
      out << ',' << io::format_double(r.moments.col(i).norm()) << '\n';
    }
  });
  return b;
}

Body run_optimize(const Params& p, bool penalized) {
  Body b;
  OptimizeConfig oc;
  oc.cells = static_cast<int>(p.integer("m"));
  oc.dimension = static_cast<int>(p.integer("d"));
  if (p.has("a")) oc.target = p.vector("a");
  if (p.has("w")) oc.shift = p.vector("w");
  oc.restarts = static_cast<int>(p.integer("restarts"));
  oc.max_iterations = static_cast<int>(p.integer("max-iter"));
  oc.search_samples = p.count("search-samples");
  oc.final_samples = p.count("samples");
  oc.chunk_size = p.count("chunk");
  oc.seed = p.count("seed");
  oc.tolerance = p.real("tol");
  oc.calibration.tolerance = p.real("calibration-tol");
  const OptimizeResult r = penalized ? minimize_penalized_perimeter(oc, p.real("epsilon")) : optimize_propeller(oc);
  json restarts = json::array();
  for (const auto& s : r.restarts) {
    restarts.push_back({{"restart", s.restart},
                        {"feasible", s.feasible},
                        {"iterations", s.iterations},
                        {"converged", s.converged},
                        {"objective", s.objective},
                        {"failure", s.failure}});
  }
  b.results = {{"objective", r.objective},
               {"moment_functional", r.moments.moment_functional},
               {"volumes", array_of(r.moments.volumes)},
               {"volume_residual", r.volume_residual},
               {"misalignment", r.alignment.misalignment},
               {"rotation", matrix_rows(r.alignment.rotation)},
               {"rearrangement_bound", rearrangement_lower_bound(r.alignment.misalignment)},
               {"best", io::to_json(r.best)},
               {"reference", io::to_json(r.reference)},
               {"restarts", restarts}};
  b.errors = {{"objective", r.objective_std_error},
              {"moment_functional", r.moments.moment_functional_std_error},
              {"misalignment", r.alignment.std_error}};
  if (r.perimeter) {
    b.results["perimeter"] = r.perimeter->total;
    b.results["epsilon"] = r.epsilon;
    b.errors["perimeter"] = r.perimeter->std_error;
  }
  b.files["trace.csv"] = render([&](std::ostream& out) { io::write_trace_csv(out, r.trace); });
  b.files["best_partition.json"] = io::to_json(r.best).dump(2) + "\n";
  return b;
}

DiscreteFunction discrete_function(const Params& p) {
  const int m = static_cast<int>(p.integer("m"));
  const int n = static_cast<int>(p.integer("n"));
  const std::string fn = p.text("function");
  if (fn == "plurality") return plurality_function(m, n);
  if (fn == "dictator") return dictator_function(m, n);
  std::ifstream in(fn);
  if (!in) throw ConfigError("cannot open " + fn);
  return io::read_discrete_csv(in, m, n);
}

Body run_discrete(const Params& p) {
  Body b;
  const DiscreteFunction f = discrete_function(p);
  const std::string action = p.text("action");
  if (action == "export") {
    b.results = {{"rows", f.table().rows()}, {"columns", f.table().cols()}};
    b.files["function.csv"] = render([&](std::ostream& out) { io::write_discrete_csv(out, f); });
    return b;
  }
  if (action == "influence") {
    const int i = static_cast<int>(p.integer("coordinate")) - 1;
    json per = json::array();
    json means = json::array();
    for (int j = 0; j < f.alphabet(); ++j) {
      const InfluenceReport r = influences(f.coordinate(j), f.alphabet(), f.voters(), i);
      per.push_back(r.influence);
      means.push_back(r.mean);
    }
    b.results = {{"coordinate", i + 1}, {"mean", means}, {"influence", per}};
    return b;
  }
  const double rho = p.single("rho");
  const DiscreteStability s = discrete_noise_stability(
      f, rho, p.flag("unnormalized-kernel") ? NoiseKernel::Convention::unnormalized : NoiseKernel::Convention::normalized);
  b.results = {{"rho", rho}, {"total", s.total}, {"per_coordinate", array_of(s.per_coordinate)}};
  b.errors = {{"total", 0.0}};
  b.files["discrete.csv"] = render([&](std::ostream& out) {
    out << "rho,coordinate,stability\n";
    for (Eigen::Index j = 0; j < s.per_coordinate.size(); ++j) {
      out << io::format_double(rho) << ',' << j + 1 << ',' << io::format_double(s.per_coordinate(j)) << '\n';
    }
    out << io::format_double(rho) << ",total," << io::format_double(s.total) << '\n';
  });
  return b;
}

std::string side_name(CylinderSide side) { return side == CylinderSide::inside ? "inside" : "outside"; }

Body run_scan(const Params& p) {
  Body b;
  const std::string o = p.text("orientation");
  const ScanOrientation orientation =
      o == "inside" ? ScanOrientation::inside : (o == "outside" ? ScanOrientation::outside : ScanOrientation::both);
  const SymmetricScan scan = symmetric_scan(p.single("a"), static_cast<int>(p.integer("kmax")), orientation);
  json rows = json::array();
  for (const auto& row : scan.rows) {
    rows.push_back({{"k", row.k},
                    {"side", side_name(row.side)},
                    {"feasible", row.feasible},
                    {"radius", row.feasible ? json(row.radius) : json(nullptr)},
                    {"perimeter", row.feasible ? json(row.perimeter) : json(nullptr)}});
  }
  b.results = {{"a", p.single("a")},
               {"best_k", scan.best_k},
               {"best_side", side_name(scan.best_side)},
               {"best_perimeter", scan.best_perimeter},
               {"rows", rows}};
  b.files["scan.csv"] = render([&](std::ostream& out) {
    out << "k,side,feasible,radius,perimeter\n";
    for (const auto& row : scan.rows) {
      out << row.k << ',' << side_name(row.side) << ',' << (row.feasible ? "true" : "false") << ','
          << (row.feasible ? io::format_double(row.radius) : "") << ','
          << (row.feasible ? io::format_double(row.perimeter) : "") << '\n';
    }
  });
  return b;
}

Body run_stability(const Params& p) {
  Body b;
  const AffinePartition reference = resolve_partition(p.text("reference"), p);
  const IntegrationConfig cfg = integration(p, reference.dimension());
  AffinePartition candidate = p.has("candidate") ? resolve_partition(p.text("candidate"), p) : reference;
  if (p.has("perturb")) {
    CalibrationOptions opts;
    opts.tolerance = p.real("calibration-tol");
    const Eigen::VectorXd volumes = mc_volumes(reference.cell_map(), cfg).volumes;
    candidate = calibrate_offsets_to_volumes(perturb(candidate, p.real("perturb"), p.count("perturb-seed")),
                                             volumes, cfg, opts);
  }
  const Eigen::VectorXd w = w_for(p, reference.dimension());
  const StabilityCertificate c = stability_margin(reference, candidate, p.real("epsilon"), w, cfg, p.real("volume-tol"));
  b.results = {{"epsilon", c.epsilon},
               {"perimeter_reference", c.perimeter_reference},
               {"perimeter_candidate", c.perimeter_candidate},
               {"moment_reference", c.moment_reference},
               {"moment_candidate", c.moment_candidate},
               {"margin", c.margin},
               {"verdict", to_string(c.verdict)},
               {"candidate", io::to_json(candidate)}};
  b.errors = {{"perimeter_reference", c.perimeter_reference_std_error},
              {"perimeter_candidate", c.perimeter_candidate_std_error},
              {"moment_reference", c.moment_reference_std_error},
              {"moment_candidate", c.moment_candidate_std_error},
              {"perimeter_difference", c.perimeter_difference_std_error},
              {"margin", c.std_error}};
  if (p.has("rho")) {
    NoiseCertificateOptions opts;
    opts.volume_tolerance = p.real("volume-tol");
    opts.allow_any_rho = p.flag("allow-any-rho");
    const NoiseCertificate nc =
        noise_stability_certificate(reference, candidate, p.single("rho"), p.real("epsilon"), w, cfg, opts);
    b.results["noise"] = {{"rho", nc.rho},
                          {"candidate_stability", nc.candidate_stability},
                          {"reference_stability", nc.reference_stability},
                          {"rhs_core", nc.rhs_core},
                          {"margin", nc.margin},
                          {"label", nc.label}};
    b.errors["noise_margin"] = nc.std_error;
  }
  return b;
}

Body run_clt(const Params& p) {
  Body b;
  IntegrationConfig cfg = integration(p, 1);
  const CltCrosscheck c = clt_crosscheck(static_cast<int>(p.integer("n")), p.single("rho"), cfg);
  b.results = {{"n", p.integer("n")}, {"rho", p.single("rho")}, {"discrete", c.discrete}, {"gaussian", c.gaussian}, {"gap", c.gap}};
  b.errors = {{"discrete", c.std_error}};
  return b;
}

}  // namespace

ExperimentSpec make_spec(const std::string& name, const json& file_values, const json& overrides) {
  const Command& cmd = command(name);
  json merged = json::object();
  for (const json* source : {&file_values, &overrides}) {
    if (source->is_null()) continue;
    if (!source->is_object()) throw ConfigError("experiment spec must be a JSON object");
    for (const auto& [key, value] : source->items()) {
      if (key == "command") {
        if (!value.is_string() || value.get<std::string>() != name) {
          throw ConfigError("spec file is for command " + value.dump() + ", not " + name);
        }
        continue;
      }
      if (std::find(cmd.keys.begin(), cmd.keys.end(), key) == cmd.keys.end()) {
        throw ConfigError("parameter '" + key + "' does not apply to " + name);
      }
      merged[key] = check_kind(parameter(key), value);
    }
  }
  ExperimentSpec spec;
  spec.command = name;
  const auto& keys = cmd.keys;
  spec.seed_defaulted = std::find(keys.begin(), keys.end(), "seed") != keys.end() && !merged.contains("seed");
  fill_defaults(name, merged);
  spec.parameters = merged;
  validate(name, Params{spec.parameters});
  return spec;
}

RunOutcome run(const ExperimentSpec& spec) {
  const Params p{spec.parameters};
  const auto start = std::chrono::steady_clock::now();
  Body body;
  const std::string& c = spec.command;
  if (c == "perimeter") {
    body = run_perimeter(p);
  } else if (c == "noise-stability") {
    body = run_noise(p);
  } else if (c == "penalty") {
    body = run_penalty(p);
  } else if (c == "optimize-propeller") {
    body = run_optimize(p, false);
  } else if (c == "minimize-penalized") {
    body = run_optimize(p, true);
  } else if (c == "discrete") {
    body = run_discrete(p);
  } else if (c == "symmetric-scan") {
    body = run_scan(p);
  } else if (c == "stability-check") {
    body = run_stability(p);
  } else if (c == "clt-crosscheck") {
    body = run_clt(p);
  } else {
    throw ConfigError("unknown command '" + c + "'");
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  RunOutcome out;
  json spec_json = spec.parameters;
  spec_json["command"] = c;
  out.summary = {{"command", c},
                 {"spec", spec_json},
                 {"results", body.results},
                 {"stderr", body.errors},
                 {"wall_time_s", seconds}};
  out.files = std::move(body.files);
  return out;
}

void write_outputs(const RunOutcome& outcome, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<std::pair<fs::path, fs::path>> staged;
  try {
    for (const auto& [name, contents] : outcome.files) {
      const fs::path final_path = dir / name;
      fs::path tmp = final_path;
      tmp += ".partial";
      std::ofstream out(tmp, std::ios::binary);
      out << contents;
      out.close();
      staged.emplace_back(tmp, final_path);
      if (!out) throw ConfigError("cannot write " + final_path.string());
    }
  } catch (...) {
    for (const auto& [tmp, _] : staged) fs::remove(tmp);
    throw;
  }
  for (const auto& [tmp, final_path] : staged) fs::rename(tmp, final_path);
}

namespace {

std::string rebase(const std::string& value, const fs::path& base) {
  if (is_builtin(value) || value == "plurality" || value == "dictator") return value;
  const fs::path path(value);
  return path.is_absolute() ? value : (base / path).string();
}

RegressionCase run_case(const fs::path& file) {
  RegressionCase rc;
  rc.name = file.stem().string();
  json doc;
  try {
    doc = io::read_json(file);
    rc.name = doc.value("name", rc.name);
    json spec = doc.value("spec", json::object());
    for (const char* key : {"partition", "reference", "candidate", "function"}) {
      if (spec.contains(key) && spec[key].is_string()) spec[key] = rebase(spec[key].get<std::string>(), file.parent_path());
    }
    const std::string cmd = doc.at("command").get<std::string>();
    const auto& keys = command(cmd).keys;
    if (std::find(keys.begin(), keys.end(), "seed") != keys.end() && !spec.contains("seed")) {
      rc.detail = "archived spec has no seed";
      return rc;
    }
    const int expected_exit = doc.value("expect_exit", 0);
    RunOutcome outcome;
    try {
      outcome = run(make_spec(cmd, spec, json::object()));
    } catch (const std::exception& e) {
      const int code = exit_code(e);
      rc.passed = code == expected_exit && expected_exit != 0;
      rc.detail = "exit " + std::to_string(code) + ": " + e.what();
      return rc;
    }
    if (expected_exit != 0) {
      rc.detail = "expected exit " + std::to_string(expected_exit) + " but the run succeeded";
      return rc;
    }
    std::ostringstream detail;
    rc.passed = true;
    for (const auto& ex : doc.value("expect", json::array())) {
      const std::string pointer = ex.at("result").get<std::string>();
      const json actual = outcome.summary.at("results").at(json::json_pointer(pointer));
      bool ok = false;
      if (ex.contains("equals")) {
        ok = actual == ex.at("equals");
        detail << pointer << "=" << actual.dump() << (ok ? " " : " (expected " + ex.at("equals").dump() + ") ");
      } else {
        const double value = ex.at("value").get<double>();
        const double tol = ex.value("abs_tol", 0.0) + ex.value("rel_tol", 0.0) * std::abs(value);
        const double got = actual.get<double>();
        ok = std::abs(got - value) <= tol;
        detail << pointer << "=" << io::format_double(got) << (ok ? " " : " (expected " + io::format_double(value) + " +- " + io::format_double(tol) + ") ");
      }
      rc.passed = rc.passed && ok;
    }
    rc.detail = detail.str();
  } catch (const std::exception& e) {
    rc.passed = false;
    rc.detail = std::string("malformed case: ") + e.what();
  }
  return rc;
}

}  // namespace

std::vector<RegressionCase> regression(const fs::path& corpus) {
  if (!fs::is_directory(corpus)) throw ConfigError("corpus directory " + corpus.string() + " not found");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(corpus)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RegressionCase> out;
  for (const auto& f : files) out.push_back(run_case(f));
  return out;
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const PrecisionError*>(&e) || dynamic_cast<const CapacityError*>(&e) ||
      dynamic_cast<const CalibrationFailure*>(&e) || dynamic_cast<const OptimizationFailure*>(&e)) {
    return 3;
  }
  return 2;
}

}  // namespace gb::harness
