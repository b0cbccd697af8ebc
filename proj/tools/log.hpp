#pragma once

// Minimal stderr logger. Verbosity comes from SVLS_LOG
// (error | warn | info | debug); the default is warn.

#include <cstdlib>
#include <iostream>
#include <string>
#include <string_view>

namespace svls::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

inline Level threshold() {
  static const Level level = [] {
    const char* env = std::getenv("SVLS_LOG");
    const std::string_view v = env ? env : "";
    if (v == "error") return Level::error;
    if (v == "info") return Level::info;
    if (v == "debug") return Level::debug;
    return Level::warn;
  }();
  return level;
}

inline void write(Level level, std::string_view message) {
  static constexpr const char* names[] = {"error", "warn", "info", "debug"};
  if (level <= threshold())
    std::cerr << "[svls " << names[static_cast<int>(level)] << "] " << message << "\n";
}

inline void warn(std::string_view m) { write(Level::warn, m); }
inline void info(std::string_view m) { write(Level::info, m); }
inline void debug(std::string_view m) { write(Level::debug, m); }

}  // namespace svls::log
