#pragma once

#include <string>

namespace ss3 {

/// Warnings go to stderr unless silenced (the test suites silence them).
void warn(const std::string& message);
void set_warnings_enabled(bool enabled);
bool warnings_enabled();

}  // namespace ss3
