#pragma once

#include <sstream>
#include <string_view>

namespace geoslomo::log {

enum class Level { debug = 0, info = 1, warn = 2, off = 3 };

void set_level(Level level);
Level level();
Level parse_level(std::string_view name);

void write(Level level, std::string_view message);

template <typename... Args>
void emit(Level lvl, const Args&... args) {
  if (lvl < level()) return;
  std::ostringstream os;
  (os << ... << args);
  write(lvl, os.str());
}

template <typename... Args>
void debug(const Args&... args) { emit(Level::debug, args...); }
template <typename... Args>
void info(const Args&... args) { emit(Level::info, args...); }
template <typename... Args>
void warn(const Args&... args) { emit(Level::warn, args...); }

}  // namespace geoslomo::log
