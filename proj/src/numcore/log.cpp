#include "adaptraj/util/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace adaptraj::util {

namespace {
std::atomic<int> g_level{static_cast<int>(LogLevel::kWarn)};
std::atomic<std::size_t> g_warnings{0};
std::mutex g_mu;

void emit(LogLevel lvl, const char* tag, const std::string& msg) {
  if (static_cast<int>(lvl) < g_level.load()) return;
  std::lock_guard lock(g_mu);
  std::cerr << "[" << tag << "] " << msg << '\n';
}
}  // namespace

void set_log_level(LogLevel level) { g_level.store(static_cast<int>(level)); }
LogLevel log_level() { return static_cast<LogLevel>(g_level.load()); }

void log_debug(const std::string& msg) { emit(LogLevel::kDebug, "debug", msg); }
void log_info(const std::string& msg) { emit(LogLevel::kInfo, "info", msg); }
void log_warn(const std::string& msg) {
  ++g_warnings;
  emit(LogLevel::kWarn, "warn", msg);
}
void log_error(const std::string& msg) { emit(LogLevel::kError, "error", msg); }

std::size_t warning_count() { return g_warnings.load(); }

}  // namespace adaptraj::util
