#include "ss3/text.hpp"

#include <charconv>
#include <cmath>

#include "ss3/errors.hpp"

namespace ss3 {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view field, const std::string& source, std::size_t line) {
  double v = 0.0;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v))
    throw InvalidInput(source + ":" + std::to_string(line) + ": invalid number '" + std::string(field) + "'");
  return v;
}

long long parse_int(std::string_view field, const std::string& source, std::size_t line) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw InvalidInput(source + ":" + std::to_string(line) + ": invalid integer '" + std::string(field) + "'");
  return v;
}

std::string format_double(double x) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) throw NumericError("format_double: conversion failed");
  return std::string(buf, ptr);
}

}  // namespace ss3

#include <atomic>
#include <iostream>

#include "ss3/log.hpp"

namespace ss3 {

namespace {
std::atomic<bool> g_warnings{true};
}

void warn(const std::string& message) {
  if (g_warnings.load()) std::cerr << "warning: " << message << '\n';
}

void set_warnings_enabled(bool enabled) { g_warnings.store(enabled); }

bool warnings_enabled() { return g_warnings.load(); }

}  // namespace ss3
