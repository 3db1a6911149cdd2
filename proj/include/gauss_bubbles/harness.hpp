#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gauss_bubbles/errors.hpp"

namespace gb::harness {

using nlohmann::json;

enum class Kind { integer, count, real, reals, text, flag };

struct Parameter {
  std::string key;
  Kind kind;
  std::string help;
};

struct Command {
  std::string name;
  std::string help;
  std::vector<std::string> keys;
};

const std::vector<Parameter>& parameters();
const std::vector<Command>& commands();
const Parameter& parameter(const std::string& key);
const Command& command(const std::string& name);

/// Converts a command-line string to the JSON value of the parameter kind.
json parse_value(const Parameter& p, const std::string& text);

/// A fully validated experiment: every parameter of the command is present
/// (defaults filled in) and type- and range-checked.
struct ExperimentSpec {
  std::string command;
  json parameters;              // effective values, defaults included
  bool seed_defaulted = false;  // no seed was given
};

/// Merges file values with flag overrides (flags win) and validates.
/// Throws ConfigError / DomainError on any problem; performs no sampling.
ExperimentSpec make_spec(const std::string& command, const json& file_values, const json& overrides);

struct RunOutcome {
  json summary;                                // {command, spec, results, stderr, wall_time_s}
  std::map<std::string, std::string> files;    // file name -> contents
};

RunOutcome run(const ExperimentSpec& spec);

/// Writes every file under dir (created if missing). Files are staged and
/// renamed so a failure leaves no partial reports.
void write_outputs(const RunOutcome& outcome, const std::filesystem::path& dir);

struct RegressionCase {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Runs every *.json case under corpus (sorted by file name). Throws
/// ConfigError when the directory is missing.
std::vector<RegressionCase> regression(const std::filesystem::path& corpus);

/// Exit status for an exception escaping run(): 2 for precondition-type
/// errors, 3 for precision, capacity and numerical failures.
int exit_code(const std::exception& e);

inline constexpr int kExitUsage = 1;
inline constexpr int kExitRegressionFailure = 4;

}  // namespace gb::harness
