#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "gauss_bubbles/harness.hpp"
#include "gauss_bubbles/io.hpp"

namespace gh = gb::harness;

namespace {

struct Invocation {
  CLI::App* app = nullptr;
  std::string spec_file;
  std::string out_dir;
  bool record_timing = false;
  std::string positional;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> flags;
};

void print_regression(const std::vector<gh::RegressionCase>& cases) {
  std::size_t width = 4;
  for (const auto& c : cases) width = std::max(width, c.name.size());
  int failed = 0;
  std::cout << "case" << std::string(width - 4 + 2, ' ') << "status  detail\n";
  for (const auto& c : cases) {
    std::cout << c.name << std::string(width - c.name.size() + 2, ' ') << (c.passed ? "pass  " : "FAIL  ") << "  "
              << c.detail << '\n';
    failed += c.passed ? 0 : 1;
  }
  std::cout << cases.size() << " cases, " << failed << " failed\n";
}

int execute(const std::string& name, const Invocation& inv) {
  if (name == "regression") {
    const auto cases = gh::regression(inv.positional);
    print_regression(cases);
    for (const auto& c : cases) {
      if (!c.passed) return gh::kExitRegressionFailure;
    }
    return 0;
  }
  gh::json file_values = gh::json::object();
  if (!inv.spec_file.empty()) file_values = gb::io::read_json(inv.spec_file);
  gh::json overrides = gh::json::object();
  for (const auto& [key, text] : inv.values) overrides[key] = gh::parse_value(gh::parameter(key), text);
  for (const auto& [key, on] : inv.flags) {
    if (on) overrides[key] = true;
  }
  if (name == "discrete" && !inv.positional.empty()) overrides["action"] = inv.positional;

  const gh::ExperimentSpec spec = gh::make_spec(name, file_values, overrides);
  if (spec.seed_defaulted) std::cerr << "warning: no seed given, using seed 0\n";
  gh::RunOutcome outcome = gh::run(spec);
  const double seconds = outcome.summary["wall_time_s"].get<double>();
  if (!inv.record_timing) outcome.summary["wall_time_s"] = nullptr;
  const std::string summary = outcome.summary.dump(2) + "\n";
  if (!inv.out_dir.empty()) {
    outcome.files["summary.json"] = summary;
    gh::write_outputs(outcome, inv.out_dir);
  }
  std::cout << summary;
  std::cerr << name << " finished in " << seconds << " s\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian multi-bubble functionals: perimeter, moments, noise stability"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "gauss-bubbles 1.0");

  std::map<std::string, Invocation> invocations;
  for (const auto& cmd : gh::commands()) {
    Invocation& inv = invocations[cmd.name];
    inv.app = app.add_subcommand(cmd.name, cmd.help);
    inv.app->add_option("--spec", inv.spec_file, "JSON experiment spec; flags override its values")->check(CLI::ExistingFile);
    inv.app->add_option("--out", inv.out_dir, "directory for summary.json and CSV reports");
    inv.app->add_flag("--record-timing", inv.record_timing, "store wall_time_s in summary.json");
    if (cmd.name == "discrete") {
      inv.app->add_option("action", inv.positional, "stability, influence or export");
    }
    for (const auto& key : cmd.keys) {
      if (key == "action") continue;
      const gh::Parameter& p = gh::parameter(key);
      if (p.kind == gh::Kind::flag) {
        inv.app->add_flag("--" + key, inv.flags[key], p.help);
      } else {
        inv.app->add_option_function<std::string>(
            "--" + key, [&inv, key](const std::string& v) { inv.values[key] = v; }, p.help);
      }
    }
  }
  Invocation& reg = invocations["regression"];
  reg.app = app.add_subcommand("regression", "run a corpus of specs with expected values");
  reg.app->add_option("corpus", reg.positional, "corpus directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : gh::kExitUsage;
  }

  for (auto& [name, inv] : invocations) {
    if (!inv.app->parsed()) continue;
    try {
      return execute(name, inv);
    } catch (const gb::ConfigError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return name == "regression" ? gh::kExitUsage : 2;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return gh::exit_code(e);
    }
  }
  return gh::kExitUsage;
}
