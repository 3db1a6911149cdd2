#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "gauss_bubbles/discrete.hpp"
#include "gauss_bubbles/errors.hpp"
#include "gauss_bubbles/noise.hpp"
#include "gauss_bubbles/partitions.hpp"
#include "gauss_bubbles/perimeter.hpp"

namespace gb::io {

using nlohmann::json;

/// {m, d, directions (row-major, m*d numbers), offsets, w}. Doubles are
/// written with round-trip precision.
json to_json(const AffinePartition& partition);
/// Throws ConfigError on missing fields or inconsistent sizes.
AffinePartition partition_from_json(const json& j);

AffinePartition read_partition(const std::filesystem::path& path);

/// Fixed 17-significant-digit rendering used by every CSV writer.
std::string format_double(double x);

void write_perimeter_csv(std::ostream& out, const PerimeterReport& report);
json to_json(const PerimeterReport& report);

void write_noise_csv(std::ostream& out, const std::vector<NoiseStabilityReport>& rows);
json to_json(const NoiseStabilityReport& report);

void write_discrete_csv(std::ostream& out, const DiscreteFunction& f);
/// Reads m^n rows of m columns; the header row is optional.
DiscreteFunction read_discrete_csv(std::istream& in, int m, int n);

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace);

/// Reads a whole JSON file, throwing ConfigError with the parser message.
json read_json(const std::filesystem::path& path);

}  // namespace gb::io
