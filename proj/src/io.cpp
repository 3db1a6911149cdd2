#include "gauss_bubbles/io.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>

namespace gb::io {

namespace {

Eigen::VectorXd vector_field(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_array()) {
    throw ConfigError(std::string("partition field '") + key + "' must be an array");
  }
  const auto& arr = j.at(key);
  Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
  for (std::size_t k = 0; k < arr.size(); ++k) {
    if (!arr[k].is_number()) throw ConfigError(std::string("partition field '") + key + "' must hold numbers");
    v(static_cast<Eigen::Index>(k)) = arr[k].get<double>();
  }
  return v;
}

json array_of(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) arr.push_back(v(k));
  return arr;
}

}  // namespace

json to_json(const AffinePartition& partition) {
  const int m = partition.cells();
  const int d = partition.dimension();
  json dirs = json::array();
  for (int i = 0; i < m; ++i) {
    for (int k = 0; k < d; ++k) dirs.push_back(partition.directions()(i, k));
  }
  return {{"m", m},
          {"d", d},
          {"directions", dirs},
          {"offsets", array_of(partition.offsets())},
          {"w", array_of(partition.shift())}};
}

AffinePartition partition_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("partition must be a JSON object");
  if (!j.contains("m") || !j.at("m").is_number_integer() || !j.contains("d") ||
      !j.at("d").is_number_integer()) {
    throw ConfigError("partition needs integer fields m and d");
  }
  const int m = j.at("m").get<int>();
  const int d = j.at("d").get<int>();
  if (m < 1 || d < 1) throw ConfigError("partition m and d must be positive");
  const Eigen::VectorXd flat = vector_field(j, "directions");
  if (flat.size() != static_cast<Eigen::Index>(m) * d) {
    throw ConfigError("partition directions must hold m*d numbers");
  }
  Eigen::MatrixXd dirs(m, d);
  for (int i = 0; i < m; ++i) {
    for (int k = 0; k < d; ++k) dirs(i, k) = flat(static_cast<Eigen::Index>(i) * d + k);
  }
  const Eigen::VectorXd offsets = vector_field(j, "offsets");
  const Eigen::VectorXd w = j.contains("w") ? vector_field(j, "w") : Eigen::VectorXd::Zero(d);
  try {
    return {dirs, offsets, w};
  } catch (const Error& e) {
    throw ConfigError(std::string("invalid partition: ") + e.what());
  }
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

AffinePartition read_partition(const std::filesystem::path& path) {
  return partition_from_json(read_json(path));
}

std::string format_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return {buf, res.ptr};
}

void write_perimeter_csv(std::ostream& out, const PerimeterReport& report) {
  out << "i,j,mass,std_error,method\n";
  for (const auto& p : report.pairs) {
    out << p.i + 1 << ',' << p.j + 1 << ',' << format_double(p.mass) << ','
        << format_double(p.std_error) << ',' << to_string(report.method) << '\n';
  }
}

json to_json(const PerimeterReport& report) {
  json pairs = json::array();
  for (const auto& p : report.pairs) {
    pairs.push_back({{"i", p.i + 1}, {"j", p.j + 1}, {"mass", p.mass}, {"std_error", p.std_error}});
  }
  return {{"method", to_string(report.method)},
          {"total", report.total},
          {"std_error", report.std_error},
          {"pairs", pairs}};
}

void write_noise_csv(std::ostream& out, const std::vector<NoiseStabilityReport>& rows) {
  out << "rho,cell,stability,std_error\n";
  for (const auto& r : rows) {
    for (Eigen::Index i = 0; i < r.per_cell.size(); ++i) {
      out << format_double(r.rho) << ',' << i + 1 << ',' << format_double(r.per_cell(i)) << ','
          << format_double(r.per_cell_std_error(i)) << '\n';
    }
    out << format_double(r.rho) << ",total," << format_double(r.total) << ','
        << format_double(r.total_std_error) << '\n';
  }
}

json to_json(const NoiseStabilityReport& report) {
  return {{"rho", report.rho},
          {"per_cell", array_of(report.per_cell)},
          {"per_cell_std_error", array_of(report.per_cell_std_error)},
          {"total", report.total},
          {"std_error", report.total_std_error},
          {"sample_count", report.sample_count},
          {"seed", report.seed}};
}

void write_discrete_csv(std::ostream& out, const DiscreteFunction& f) {
  for (int j = 0; j < f.alphabet(); ++j) out << (j ? "," : "") << 'f' << j + 1;
  out << '\n';
  for (Eigen::Index r = 0; r < f.table().rows(); ++r) {
    for (int j = 0; j < f.alphabet(); ++j) out << (j ? "," : "") << format_double(f.table()(r, j));
    out << '\n';
  }
}

DiscreteFunction read_discrete_csv(std::istream& in, int m, int n) {
  const std::size_t rows = cube_size(m, n);
  Eigen::MatrixXd table(static_cast<Eigen::Index>(rows), m);
  std::string line;
  std::size_t r = 0;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.find_first_of("0123456789.-") != 0) continue;
    if (r == rows) throw ConfigError("discrete table has more than m^n rows");
    std::stringstream ss(line);
    std::string cell;
    int col = 0;
    while (std::getline(ss, cell, ',')) {
      if (col >= m) throw ConfigError("line " + std::to_string(line_no) + " has more than m columns");
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        throw ConfigError("line " + std::to_string(line_no) + ": '" + cell + "' is not a number");
      }
      table(static_cast<Eigen::Index>(r), col++) = v;
    }
    if (col != m) throw ConfigError("line " + std::to_string(line_no) + " needs m columns");
    ++r;
  }
  if (r != rows) throw ConfigError("discrete table needs m^n = " + std::to_string(rows) + " rows");
  try {
    return {m, n, std::move(table)};
  } catch (const Error& e) {
    throw ConfigError(std::string("invalid discrete table: ") + e.what());
  }
}

void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& trace) {
  out << "restart,iteration,objective,residual\n";
  for (const auto& t : trace) {
    out << t.restart << ',' << t.iteration << ',' << format_double(t.objective) << ','
        << format_double(t.residual) << '\n';
  }
}

}  // namespace gb::io
