#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cdseg/core/error.hpp"
#include "cdseg/geometry/point_cloud.hpp"

namespace cdseg::geometry {

// Text format, one scene per file:
//   cdseg v1 <N> <K> <C>
//   x y z f1 .. fC label        (N lines)
// Reals are written in shortest round-trip form.

namespace detail {

inline void append_double(std::string& out, double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <class V>
V parse_number(std::string_view tok, std::size_t line, const char* what) {
  V v{};
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
    throw ParseError(line, std::string("invalid ") + what + " '" + std::string(tok) + "'");
  return v;
}

}  // namespace detail

/// Single-element clouds only; write batch elements separately.
inline std::string format_cloud(const PointCloud& cloud) {
  if (cloud.batch_size() > 1) throw ArgumentError("format_cloud: expected a single-element cloud");
  std::string out = "cdseg v1 " + std::to_string(cloud.size()) + " " + std::to_string(cloud.num_classes) + " " +
                    std::to_string(cloud.channels()) + "\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (std::size_t d = 0; d < 3; ++d) {
      detail::append_double(out, cloud.positions(i, d));
      out.push_back(' ');
    }
    for (std::size_t c = 0; c < cloud.channels(); ++c) {
      detail::append_double(out, cloud.features(i, c));
      out.push_back(' ');
    }
    out += std::to_string(cloud.labels[i]);
    out.push_back('\n');
  }
  return out;
}

inline PointCloud parse_cloud(std::string_view text) {
  std::size_t pos = 0, line_no = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    std::size_t e = text.find('\n', pos);
    if (e == std::string_view::npos) e = text.size();
    line = text.substr(pos, e - pos);
    pos = e + 1;
    ++line_no;
    return true;
  };
  std::string_view line;
  if (!next_line(line)) throw ParseError(1, "empty file");
  auto head = detail::split_ws(line);
  if (head.size() != 5 || head[0] != "cdseg" || head[1] != "v1")
    throw ParseError(line_no, "malformed header, expected 'cdseg v1 <N> <K> <C>'");
  const auto n = detail::parse_number<std::size_t>(head[2], line_no, "point count");
  const auto k = detail::parse_number<int>(head[3], line_no, "class count");
  const auto c = detail::parse_number<std::size_t>(head[4], line_no, "channel count");
  PointCloud cloud;
  cloud.num_classes = k;
  cloud.positions = Matrix<double>(n, 3);
  cloud.features = Matrix<double>(n, c);
  cloud.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!next_line(line)) throw ParseError(line_no + 1, "expected " + std::to_string(n) + " point rows, file ended");
    auto tok = detail::split_ws(line);
    if (tok.size() != 4 + c)
      throw ParseError(line_no, "expected " + std::to_string(4 + c) + " columns, got " + std::to_string(tok.size()));
    for (std::size_t d = 0; d < 3; ++d) cloud.positions(i, d) = detail::parse_number<double>(tok[d], line_no, "coordinate");
    for (std::size_t f = 0; f < c; ++f) cloud.features(i, f) = detail::parse_number<double>(tok[3 + f], line_no, "feature");
    const int label = detail::parse_number<int>(tok[3 + c], line_no, "label");
    if (label < kUnlabeled || label >= k) throw ParseError(line_no, "label " + std::to_string(label) + " outside [-1, K)");
    cloud.labels[i] = label;
  }
  while (next_line(line))
    if (!detail::split_ws(line).empty()) throw ParseError(line_no, "trailing content after point rows");
  if (n > 0) cloud.offsets = {n};
  return cloud;
}

inline void save_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("save_cloud: cannot open " + path.string());
  f << format_cloud(cloud);
  if (!f) throw Error("save_cloud: write failed for " + path.string());
}

inline PointCloud load_cloud(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("load_cloud: cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return parse_cloud(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " + e.what());
  }
}

}  // namespace cdseg::geometry
