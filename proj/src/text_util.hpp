#pragma once

// Internal helpers shared by the text readers and writers.

#include <charconv>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace evac3d::detail {

/// Shortest representation that round-trips exactly.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

/// Splits on whitespace and, when `commas` is set, on ','.
inline std::vector<std::string_view> split_fields(std::string_view line, bool commas) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  auto is_sep = [&](char c) {
    return c == ' ' || c == '\t' || c == '\r' || (commas && c == ',');
  };
  while (i < line.size()) {
    while (i < line.size() && is_sep(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_sep(line[j])) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string_view strip_comment(std::string_view line) {
  auto pos = line.find('#');
  return pos == std::string_view::npos ? line : line.substr(0, pos);
}

}  // namespace evac3d::detail
