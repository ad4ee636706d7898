#pragma once

#include <atomic>
#include <iostream>
#include <mutex>
#include <string_view>

namespace phishlens::log {

enum class Level { debug, info, warning, error, off };

inline std::atomic<Level>& threshold() {
  static std::atomic<Level> level{Level::warning};
  return level;
}

inline void set_level(Level level) { threshold().store(level); }

inline void write(Level level, std::string_view message) {
  if (level < threshold().load()) return;
  static std::mutex mu;
  static constexpr std::string_view names[] = {"debug", "info", "warning", "error"};
  std::lock_guard lock(mu);
  std::cerr << "[phishlens " << names[static_cast<int>(level)] << "] " << message << '\n';
}

inline void info(std::string_view message) { write(Level::info, message); }
inline void warning(std::string_view message) { write(Level::warning, message); }
inline void error(std::string_view message) { write(Level::error, message); }

}  // namespace phishlens::log
