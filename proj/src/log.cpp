#include "cdnexpose/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

namespace cdnexpose {

namespace {

LogLevel initial_level() {
    const char* env = std::getenv("CDNEXPOSE_LOG");
    if (env == nullptr) return LogLevel::warn;
    const std::string v = env;
    if (v == "debug") return LogLevel::debug;
    if (v == "info") return LogLevel::info;
    if (v == "error") return LogLevel::error;
    if (v == "off") return LogLevel::off;
    return LogLevel::warn;
}

std::atomic<LogLevel>& level_ref() {
    static std::atomic<LogLevel> level{initial_level()};
    return level;
}

std::mutex& sink_mutex() {
    static std::mutex m;
    return m;
}

const char* tag(LogLevel level) {
    switch (level) {
        case LogLevel::debug: return "debug";
        case LogLevel::info: return "info";
        case LogLevel::warn: return "warn";
        case LogLevel::error: return "error";
        case LogLevel::off: return "";
    }
    return "";
}

}  // namespace

void set_log_level(LogLevel level) { level_ref() = level; }
LogLevel log_level() { return level_ref(); }

void log_line(LogLevel level, std::string_view message) {
    if (level < level_ref().load() || level == LogLevel::off) return;
    std::lock_guard lock(sink_mutex());
    std::cerr << "[" << tag(level) << "] " << message << '\n';
}

}  // namespace cdnexpose
