#pragma once

#include <cctype>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "swt/core.hpp"

namespace swt::io {

// Shortest decimal text that round-trips to the same double.
inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<long long> parse_int(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open file '", path.string(), "'");
  std::ostringstream oss;
  oss << in.rdbuf();
  return oss.str();
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), "cannot write file '", path.string(), "'");
  out << text;
  require(static_cast<bool>(out), "write failed for '", path.string(), "'");
}

// Headerless numeric CSV. Blank lines are ignored; every row must have the
// same number of columns.
inline Matrix parse_csv_table(std::string_view text, std::string_view origin = "<csv>") {
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t col = 0;
    for (auto cell : split(line, ',')) {
      ++col;
      const auto v = parse_double(cell);
      require(v.has_value(), origin, ": malformed number '", trim(cell), "' at line ", line_no, ", column ", col);
      row.push_back(*v);
    }
    if (!rows.empty()) {
      require(row.size() == rows.front().size(), origin, ": line ", line_no, " has ", row.size(),
              " columns, expected ", rows.front().size());
    }
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), origin, ": empty table");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return m;
}

inline std::string format_csv_table(const Matrix& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out += ',';
      out += format_double(m(i, j));
    }
    out += '\n';
  }
  return out;
}

inline Matrix read_csv_table(const std::filesystem::path& path) {
  return parse_csv_table(read_text(path), path.string());
}

inline void write_csv_table(const std::filesystem::path& path, const Matrix& m) {
  write_text(path, format_csv_table(m));
}

// Reads a histogram stored either as one row or as one column.
inline std::vector<double> read_csv_vector(const std::filesystem::path& path) {
  const Matrix m = read_csv_table(path);
  require(m.rows() == 1 || m.cols() == 1, path.string(), ": expected a single row or column, got ", m.rows(), "x",
          m.cols());
  return std::vector<double>(m.data(), m.data() + m.size());
}

// Flat key=value configuration; '#' starts a comment; keys may carry
// dotted section prefixes ("seg.lr").
class Config {
 public:
  Config() = default;

  static Config parse(std::string_view text, std::string_view origin = "<config>") {
    Config cfg;
    std::size_t line_no = 0;
    for (auto line : split(text, '\n')) {
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        fail(origin, ":", line_no, ": malformed line for key '", line, "' (expected key=value)");
      }
      const auto key = trim(line.substr(0, eq));
      const auto value = trim(line.substr(eq + 1));
      require(!key.empty(), origin, ":", line_no, ": empty key");
      require(!value.empty(), origin, ":", line_no, ": empty value for key '", key, "'");
      cfg.values_[std::string(key)] = std::string(value);
    }
    return cfg;
  }

  static Config load(const std::filesystem::path& path) { return parse(read_text(path), path.string()); }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string get_string(const std::string& key) const {
    const auto it = values_.find(key);
    require(it != values_.end(), "missing required config key '", key, "'");
    return it->second;
  }
  std::string get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key) const {
    const auto v = parse_double(get_string(key));
    require(v.has_value(), "config key '", key, "' is not a number: '", get_string(key), "'");
    return *v;
  }
  double get_double(const std::string& key, double fallback) const { return has(key) ? get_double(key) : fallback; }

  long long get_int(const std::string& key) const {
    const auto v = parse_int(get_string(key));
    require(v.has_value(), "config key '", key, "' is not an integer: '", get_string(key), "'");
    return *v;
  }
  long long get_int(const std::string& key, long long fallback) const { return has(key) ? get_int(key) : fallback; }

  bool get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto v = get_string(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail("config key '", key, "' is not a boolean: '", v, "'");
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  std::string to_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
};

// Plain (ASCII) portable graymap holding small integer labels.
struct LabelGrid {
  int height = 0;
  int width = 0;
  std::vector<int> labels;  // row-major
};

inline std::string format_pgm(const LabelGrid& g, int max_value) {
  std::string out = "P2\n" + std::to_string(g.width) + " " + std::to_string(g.height) + "\n" +
                    std::to_string(max_value) + "\n";
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      if (c) out += ' ';
      out += std::to_string(g.labels[static_cast<std::size_t>(r * g.width + c)]);
    }
    out += '\n';
  }
  return out;
}

inline LabelGrid parse_pgm(std::string_view text, std::string_view origin = "<pgm>") {
  std::vector<std::string_view> tokens;
  for (auto line : split(text, '\n')) {
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      const std::size_t start = i;
      while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      if (i > start) tokens.push_back(line.substr(start, i - start));
    }
  }
  require(tokens.size() >= 4 && tokens[0] == "P2", origin, ": not a plain PGM (P2) file");
  const auto w = parse_int(tokens[1]);
  const auto h = parse_int(tokens[2]);
  const auto maxv = parse_int(tokens[3]);
  require(w && h && maxv && *w > 0 && *h > 0, origin, ": bad PGM header");
  LabelGrid g;
  g.width = static_cast<int>(*w);
  g.height = static_cast<int>(*h);
  const auto count = static_cast<std::size_t>(g.width) * static_cast<std::size_t>(g.height);
  require(tokens.size() == 4 + count, origin, ": expected ", count, " pixels, found ", tokens.size() - 4);
  g.labels.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const auto v = parse_int(tokens[4 + k]);
    require(v && *v >= 0 && *v <= *maxv, origin, ": bad pixel value '", tokens[4 + k], "'");
    g.labels.push_back(static_cast<int>(*v));
  }
  return g;
}

}  // namespace swt::io
