#pragma once

#include <string_view>

namespace cdnexpose {

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3, off = 4 };

// Threshold defaults to warn; CDNEXPOSE_LOG=debug|info|warn|error|off overrides.
void set_log_level(LogLevel level);
LogLevel log_level();

void log_line(LogLevel level, std::string_view message);

inline void log_debug(std::string_view m) { log_line(LogLevel::debug, m); }
inline void log_info(std::string_view m) { log_line(LogLevel::info, m); }
inline void log_warn(std::string_view m) { log_line(LogLevel::warn, m); }
inline void log_error(std::string_view m) { log_line(LogLevel::error, m); }

}  // namespace cdnexpose
