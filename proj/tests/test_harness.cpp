#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gauss_bubbles/harness.hpp"
#include "gauss_bubbles/io.hpp"
#include "gauss_bubbles/optimize.hpp"
#include "gauss_bubbles/partitions.hpp"
#include "gauss_bubbles/perimeter.hpp"

using namespace gb;
using namespace gb::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("gb_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("command table is consistent") {
  CHECK(commands().size() == 9);
  for (const auto& c : commands()) {
    for (const auto& key : c.keys) CHECK_NOTHROW(parameter(key));
  }
  CHECK_THROWS_AS(command("regress"), ConfigError);
  CHECK_THROWS_AS(parameter("sample"), ConfigError);
}

TEST_CASE("parameter parsing") {
  CHECK(parse_value(parameter("samples"), "1e6") == json(std::uint64_t{1'000'000}));
  CHECK(parse_value(parameter("rho"), "0.1,0.5") == json::array({0.1, 0.5}));
  CHECK(parse_value(parameter("antithetic"), "true") == json(true));
  CHECK(parse_value(parameter("partition"), "propeller3") == json("propeller3"));
  CHECK_THROWS_AS(parse_value(parameter("samples"), "lots"), ConfigError);
  CHECK_THROWS_AS(parse_value(parameter("samples"), "1.5"), ConfigError);
  CHECK_THROWS_AS(parse_value(parameter("samples"), "-3"), ConfigError);
  CHECK_THROWS_AS(parse_value(parameter("m"), "2.5"), ConfigError);
  CHECK_THROWS_AS(parse_value(parameter("rho"), "0.1,,0.2"), ConfigError);
}

TEST_CASE("spec merging and validation") {
  const json file = {{"command", "perimeter"}, {"samples", 20000}, {"seed", 3}};
  const ExperimentSpec s = make_spec("perimeter", file, json{{"seed", 9}});
  CHECK(s.parameters["seed"] == 9);
  CHECK(s.parameters["samples"] == 20000);
  CHECK(s.parameters["method"] == "facet");
  CHECK_FALSE(s.seed_defaulted);
  CHECK(make_spec("perimeter", json::object(), json::object()).seed_defaulted);
  CHECK_FALSE(make_spec("symmetric-scan", json{{"a", 0.5}}, json::object()).seed_defaulted);

  CHECK_THROWS_AS(make_spec("perimeter", json{{"rho", 0.5}}, json::object()), ConfigError);
  CHECK_THROWS_AS(make_spec("perimeter", json{{"samples", "many"}}, json::object()), ConfigError);
  CHECK_THROWS_AS(make_spec("perimeter", json{{"command", "penalty"}}, json::object()), ConfigError);
  CHECK_THROWS_AS(make_spec("perimeter", json::array(), json::object()), ConfigError);
  CHECK_THROWS_AS(make_spec("perimeter", json{{"samples", 12345}}, json::object()), ConfigError);
  CHECK_THROWS_AS(make_spec("noise-stability", json{{"rho", 1.0}}, json::object()), DomainError);
  CHECK_THROWS_AS(make_spec("noise-stability", json{{"limit", true}, {"rho", {0.9, 0.95, 0.98}}}, json::object()), ConfigError);
  CHECK_THROWS_AS(make_spec("symmetric-scan", json::object(), json::object()), ConfigError);
  CHECK_THROWS_AS(make_spec("symmetric-scan", json{{"a", 1.2}}, json::object()), DomainError);
  CHECK_THROWS_AS(make_spec("discrete", json{{"m", 2}}, json::object()), ConfigError);
  CHECK_THROWS_AS(make_spec("discrete", json{{"m", 10}, {"n", 8}}, json::object()), CapacityError);
  CHECK_THROWS_AS(make_spec("stability-check", json{{"candidate", "halfspace"}}, json::object()), PreconditionError);
  CHECK_THROWS_AS(make_spec("stability-check", json{{"candidate", "propeller3"}, {"rho", 0.3}}, json::object()), DomainError);
  CHECK_NOTHROW(make_spec("stability-check", json{{"candidate", "propeller3"}, {"rho", 0.3}, {"allow-any-rho", true}}, json::object()));
  CHECK_THROWS_AS(make_spec("perimeter", json{{"tail-radius", 1.0}}, json::object()), HypothesisNotMet);
  CHECK_THROWS_AS(make_spec("optimize-propeller", json{{"m", 4}, {"d", 2}}, json::object()), DomainError);
  CHECK_THROWS_AS(make_spec("perimeter", json{{"partition", "/nonexistent/p.json"}}, json::object()), ConfigError);
  CHECK_THROWS_AS(make_spec("perimeter", json{{"method", "minkowski"}}, json::object()), ConfigError);
  CHECK_THROWS_AS(make_spec("perimeter", json{{"method", "minkowski"}, {"cylinder-k", 1}, {"d", 3}}, json::object()), ConfigError);
  CHECK_THROWS_AS(make_spec("perimeter", json{{"method", "minkowski"}, {"cylinder-k", 3}, {"r", 1.0}, {"d", 3}}, json::object()), DomainError);
  CHECK_THROWS_AS(make_spec("perimeter", json{{"method", "minkowski"}, {"cylinder-k", 1}, {"r", 1.0}, {"d", 3}, {"tail-radius", 3.0}}, json::object()), ConfigError);
}

TEST_CASE("perimeter run and reports") {
  const ExperimentSpec s = make_spec("perimeter", json{{"samples", 100000}, {"seed", 7}, {"tail-radius", 2.0}}, json::object());
  const RunOutcome out = run(s);
  for (const char* key : {"command", "spec", "results", "stderr", "wall_time_s"}) CHECK(out.summary.contains(key));
  CHECK(out.summary["command"] == "perimeter");
  CHECK(out.summary["spec"]["seed"] == 7);
  CHECK(out.summary["results"]["total"].get<double>() == doctest::Approx(0.5984).epsilon(0.02));
  CHECK(out.summary["results"]["tail"]["pass"] == true);
  CHECK(out.summary["stderr"]["total"].get<double>() > 0.0);
  REQUIRE(out.files.count("perimeter.csv") == 1);
  const std::string csv = out.files.at("perimeter.csv");
  CHECK(csv.rfind("i,j,mass,std_error,method\n", 0) == 0);
  CHECK(csv.find("\ntotal,,") != std::string::npos);

  const fs::path dir = scratch("write") / "nested";
  write_outputs(out, dir);
  CHECK(slurp(dir / "perimeter.csv") == csv);
  CHECK(std::none_of(fs::directory_iterator(dir), fs::directory_iterator(), [](const auto& e) {
    return e.path().extension() == ".partial";
  }));
}

TEST_CASE("other commands run") {
  const RunOutcome cyl = run(make_spec("perimeter",
                                       json{{"method", "minkowski"}, {"cylinder-k", 1}, {"r", 1.0}, {"d", 3},
                                            {"eps", {0.08, 0.06, 0.04, 0.02}}, {"samples", 1000000}, {"seed", 3}},
                                       json::object()));
  const CylinderMeasures exact = cylinder_closed_forms(RoundCylinder(1, 1.0, 3));
  const auto& cr = cyl.summary["results"];
  CHECK(std::abs(cr["perimeter"].get<double>() - exact.perimeter) <= 3.0 * cyl.summary["stderr"]["perimeter"].get<double>());
  CHECK(std::abs(cr["volume"].get<double>() - exact.volume) <= 3.0 * cyl.summary["stderr"]["volume"].get<double>());
  CHECK(cyl.files.count("minkowski.csv") == 1);

  const RunOutcome d = run(make_spec("discrete", json{{"m", 2}, {"n", 3}, {"rho", 0.0}}, json::object()));
  CHECK(d.summary["results"]["total"].get<double>() == doctest::Approx(0.5).epsilon(1e-15));
  const RunOutcome inf = run(make_spec("discrete", json{{"action", "influence"}, {"m", 2}, {"n", 3}, {"function", "dictator"}}, json::object()));
  CHECK(inf.summary["results"]["influence"][0].get<double>() == doctest::Approx(0.25));
  const RunOutcome exp = run(make_spec("discrete", json{{"action", "export"}, {"m", 3}, {"n", 2}}, json::object()));
  CHECK(exp.files.count("function.csv") == 1);

  const RunOutcome scan = run(make_spec("symmetric-scan", json{{"a", 0.39347}, {"kmax", 3}}, json::object()));
  bool found = false;
  for (const auto& row : scan.summary["results"]["rows"]) {
    if (row["k"] == 1 && row["side"] == "inside") {
      found = true;
      CHECK(row["radius"].get<double>() == doctest::Approx(1.0).epsilon(1e-4));
      CHECK(row["perimeter"].get<double>() == doctest::Approx(0.60653).epsilon(1e-4));
    }
  }
  CHECK(found);

  const RunOutcome pen = run(make_spec("penalty", json{{"samples", 100000}, {"seed", 2}}, json::object()));
  CHECK(pen.summary["results"]["moment_functional"].get<double>() == doctest::Approx(0.358).epsilon(0.03));
  CHECK(pen.files.count("moments.csv") == 1);

  const RunOutcome cert = run(make_spec("stability-check",
                                        json{{"perturb", 0.1}, {"samples", 100000}, {"seed", 5}, {"rho", 0.9}},
                                        json::object()));
  const auto& r = cert.summary["results"];
  CHECK(r.contains("margin"));
  CHECK(r.contains("noise"));
  const std::string verdict = r["verdict"].get<std::string>();
  CHECK((verdict == "pass" || verdict == "fail" || verdict == "inconclusive"));
}

TEST_CASE("partition files") {
  const fs::path dir = scratch("files");
  const AffinePartition p = perturb(simplicial_cone_partition(3, Eigen::VectorXd::Zero(2)), 0.1, 1);
  {
    std::ofstream out(dir / "p.json");
    out << io::to_json(p).dump(2);
  }
  CHECK(io::read_partition(dir / "p.json") == p);
  const RunOutcome out = run(make_spec("perimeter", json{{"partition", (dir / "p.json").string()}, {"samples", 10000}, {"seed", 1}}, json::object()));
  CHECK(out.summary["results"]["pairs"].size() == 3);
  {
    std::ofstream bad(dir / "bad.json");
    bad << R"({"m": 2, "d": 1, "directions": [1, 1], "offsets": [0, 0]})";
  }
  CHECK_THROWS_AS(io::read_partition(dir / "bad.json"), ConfigError);
  {
    std::ofstream broken(dir / "broken.json");
    broken << "{";
  }
  CHECK_THROWS_AS(io::read_partition(dir / "broken.json"), ConfigError);
}

TEST_CASE("regression runner") {
  const fs::path dir = scratch("corpus");
  CHECK(regression(dir).empty());
  CHECK_THROWS_AS(regression(dir / "missing"), ConfigError);
  fs::create_directories(dir / "data");
  {
    std::ofstream p(dir / "data" / "half.json");
    p << io::to_json(halfspace_split(2, 0.0)).dump();
    std::ofstream ok(dir / "a_ok.json");
    ok << R"({"name": "relative file", "command": "perimeter",
             "spec": {"partition": "data/half.json", "samples": 10000, "seed": 1},
             "expect": [{"result": "/total", "value": 0.3989422804014327, "abs_tol": 1e-9}]})";
    std::ofstream bad(dir / "b_bad.json");
    bad << R"({"name": "wrong", "command": "perimeter",
              "spec": {"partition": "halfspace", "samples": 10000, "seed": 1},
              "expect": [{"result": "/total", "value": 0.5, "abs_tol": 1e-3}]})";
    std::ofstream unseeded(dir / "c_unseeded.json");
    unseeded << R"({"name": "unseeded", "command": "perimeter", "spec": {"samples": 10000}, "expect": []})";
    std::ofstream text(dir / "d_text.json");
    text << R"({"name": "text", "command": "symmetric-scan", "spec": {"a": 0.5},
               "expect": [{"result": "/best_side", "equals": "inside"}]})";
  }
  const auto cases = regression(dir);
  REQUIRE(cases.size() == 4);
  CHECK(cases[0].name == "relative file");
  CHECK(cases[0].passed);
  CHECK(cases[1].name == "wrong");
  CHECK_FALSE(cases[1].passed);
  CHECK_FALSE(cases[2].passed);
  CHECK(cases[2].detail.find("seed") != std::string::npos);
  CHECK(cases[3].passed);
}

TEST_CASE("exit codes") {
  CHECK(exit_code(ConfigError("x")) == 2);
  CHECK(exit_code(DomainError("x")) == 2);
  CHECK(exit_code(PreconditionError("x")) == 2);
  CHECK(exit_code(HypothesisNotMet("x")) == 2);
  CHECK(exit_code(PrecisionError("x")) == 3);
  CHECK(exit_code(CapacityError("x")) == 3);
  CHECK(exit_code(CalibrationFailure("x", Eigen::VectorXd::Zero(2), 0.1)) == 3);
}
