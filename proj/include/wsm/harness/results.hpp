#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "wsm/core.hpp"

namespace wsm {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kResultSchemaVersion = 1;
inline constexpr const char* kResultColumns =
    "method,d,L,N_train,n_test,k_or_degree,mean,std_error,mesh_u0,wall_time_s,seed,version";

struct ResultRow {
  std::string method;
  std::size_t d = 1;
  std::size_t steps = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t k_or_degree = 0;
  double mean = 0.0;
  double std_error = 0.0;
  /// NaN when the method builds no mesh
  double mesh_u0 = std::numeric_limits<double>::quiet_NaN();
  double wall_time_s = 0.0;
  /// "train:test"
  std::string seed;
  std::string version = kVersion;
};

inline std::string format_row(const ResultRow& r) {
  std::ostringstream os;
  os << std::setprecision(10);
  auto num = [&](double v) {
    if (std::isnan(v)) os << "";
    else os << v;
  };
  os << r.method << ',' << r.d << ',' << r.steps << ',' << r.n_train << ',' << r.n_test << ',' << r.k_or_degree << ',';
  num(r.mean);
  os << ',';
  num(r.std_error);
  os << ',';
  num(r.mesh_u0);
  os << ',';
  num(r.wall_time_s);
  os << ',' << r.seed << ',' << r.version;
  return os.str();
}

inline std::string result_schema_header() {
  return "# wsm results schema " + std::to_string(kResultSchemaVersion) + "\n" + kResultColumns + "\n";
}

/// Appends rows to a CSV file, writing the schema header when the file is
/// new or empty; refuses to append to a file with a different header.
inline void append_rows(const std::string& path, const std::vector<ResultRow>& rows) {
  namespace fs = std::filesystem;
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const bool fresh = !fs::exists(p) || fs::file_size(p) == 0;
  if (!fresh) {
    std::ifstream in(path);
    std::string first, second;
    std::getline(in, first);
    std::getline(in, second);
    if (first + "\n" + second + "\n" != result_schema_header())
      throw ConfigError(path + ": existing file has a different result schema; refusing to append");
  }
  std::ofstream out(path, std::ios::app);
  if (!out) throw ConfigError("cannot open " + path + " for appending");
  if (fresh) out << result_schema_header();
  for (const auto& r : rows) out << format_row(r) << '\n';
  if (!out) throw Error("failed writing " + path);
}

/// Appends one JSON line to `path`.
inline void append_line(const std::string& path, const std::string& line) {
  namespace fs = std::filesystem;
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw ConfigError("cannot open " + path + " for appending");
  out << line << '\n';
}

}  // namespace wsm
