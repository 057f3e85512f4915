#include "hmx/log.hpp"

#include "hmx/time.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace hmx {

namespace {
std::atomic<int> g_level{static_cast<int>(LogLevel::Info)};
std::mutex g_mutex;

const char* level_name(LogLevel l) {
    switch (l) {
    case LogLevel::Debug: return "DEBUG";
    case LogLevel::Info: return "INFO";
    case LogLevel::Warn: return "WARN";
    case LogLevel::Error: return "ERROR";
    }
    return "?";
}
} // namespace

void set_log_level(LogLevel level) { g_level.store(static_cast<int>(level)); }

LogLevel log_level() { return static_cast<LogLevel>(g_level.load()); }

void log_line(LogLevel level, const std::string& component, const std::string& message) {
    if (static_cast<int>(level) < g_level.load())
        return;
    std::lock_guard<std::mutex> lock(g_mutex);
    std::cerr << format_iso8601(SystemClock::instance().now()) << ' ' << level_name(level) << " ["
              << component << "] " << message << '\n';
}

} // namespace hmx
