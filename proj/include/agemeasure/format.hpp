#ifndef AGEMEASURE_FORMAT_HPP
#define AGEMEASURE_FORMAT_HPP

#include <array>
#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "agemeasure/errors.hpp"

namespace agemeasure {

/// Decimal with 17 significant digits; parses back to the identical double.
inline std::string format_exact(double value) {
  std::array<char, 40> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value,
                                 std::chars_format::general, 17);
  if (ec != std::errc{}) throw ContractError("format_exact: conversion failed");
  return std::string(buf.data(), end);
}

/// Shortest decimal that round-trips; used for human-edited descriptors.
inline std::string format_short(double value) {
  std::array<char, 40> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) throw ContractError("format_short: conversion failed");
  return std::string(buf.data(), end);
}

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(ws);
  return s.substr(first, last - first + 1);
}

inline double parse_double(std::string_view text) {
  text = trim(text);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
    throw ContractError("not a number: '" + std::string(text) + "'");
  return value;
}

template <typename Int>
Int parse_integer(std::string_view text) {
  text = trim(text);
  Int value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
    throw ContractError("not an integer: '" + std::string(text) + "'");
  return value;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::vector<double> parse_double_list(std::string_view text) {
  std::vector<double> values;
  if (trim(text).empty()) return values;
  for (auto item : split(text, ',')) values.push_back(parse_double(item));
  return values;
}

}  // namespace agemeasure

#endif  // AGEMEASURE_FORMAT_HPP
