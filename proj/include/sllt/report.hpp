#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sllt/error.hpp"
#include "sllt/linalg.hpp"

namespace sllt {

/// Shortest round-trip text for a double ('.' decimal, no locale).
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt(const Vector& v) {
  std::string out;
  for (Index j = 0; j < v.size(); ++j) out += (j ? ";" : "") + fmt(v(j));
  return out;
}

using Metadata = std::vector<std::pair<std::string, std::string>>;

/// CSV with "# key=value" preamble lines, one header row and data rows.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const Metadata& meta, const std::vector<std::string>& columns)
      : out_(path, std::ios::binary) {
    if (!out_) throw Error(ErrorKind::ConfigError, "report", "cannot write " + path.string());
    for (const auto& [k, v] : meta) out_ << "# " << k << '=' << v << '\n';
    write(columns);
  }

  void write(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

inline void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::ConfigError, "report", "cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace sllt
