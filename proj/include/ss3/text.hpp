#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ss3 {

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);
double parse_double(std::string_view field, const std::string& source, std::size_t line);
long long parse_int(std::string_view field, const std::string& source, std::size_t line);
/// Shortest decimal that round-trips exactly.
std::string format_double(double x);

}  // namespace ss3
