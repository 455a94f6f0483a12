#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "fishloc/error.hpp"

namespace fishloc {

/// Shortest decimal text that round-trips to the same double.
inline std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

/// Parses a full token as a double; returns false on trailing garbage.
inline bool try_parse_double(std::string_view token, double& out) {
  token = trim(token);
  if (token.empty()) return false;
  if (token.front() == '+') token.remove_prefix(1);
  const auto res = std::from_chars(token.data(), token.data() + token.size(), out);
  return res.ec == std::errc{} && res.ptr == token.data() + token.size();
}

inline double parse_double(std::string_view token, const std::string& what) {
  double v = 0.0;
  if (!try_parse_double(token, v)) throw InputError(what + ": cannot parse number '" + std::string(token) + "'");
  return v;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << content;
}

/// Numeric CSV table. A first row containing any non-numeric cell is treated
/// as a header. Every data row must have exactly `columns` cells.
inline std::vector<std::vector<double>> read_numeric_csv(const std::string& path, std::size_t columns) {
  std::istringstream in(read_text_file(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto cells = split(body, ',');
    std::vector<double> row;
    row.reserve(cells.size());
    bool numeric = true;
    for (auto cell : cells) {
      double v = 0.0;
      if (!try_parse_double(cell, v)) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (rows.empty() && line_no == 1) continue;
      throw InputError(path + ":" + std::to_string(line_no) + ": non-numeric field");
    }
    if (row.size() != columns) {
      throw InputError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(columns) + " fields, got " +
                       std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace fishloc
