#pragma once

#include <cstddef>
#include <string>

namespace adaptraj::util {

enum class LogLevel { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kQuiet = 4 };

void set_log_level(LogLevel level);
LogLevel log_level();

void log_debug(const std::string& msg);
void log_info(const std::string& msg);
void log_warn(const std::string& msg);
void log_error(const std::string& msg);

/// Warnings emitted so far (counted even when suppressed).
std::size_t warning_count();

}  // namespace adaptraj::util
