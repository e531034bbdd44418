#include "geoslomo/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

#include "geoslomo/errors.hpp"

namespace geoslomo::log {
namespace {

std::atomic<Level> g_level{Level::info};
std::mutex g_mutex;

constexpr std::string_view tag(Level l) {
  switch (l) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warn: return "warn";
    default: return "";
  }
}

}  // namespace

void set_level(Level lvl) { g_level.store(lvl); }

Level level() { return g_level.load(); }

Level parse_level(std::string_view name) {
  if (name == "debug") return Level::debug;
  if (name == "info") return Level::info;
  if (name == "warn") return Level::warn;
  if (name == "off") return Level::off;
  throw ParameterError("log-level", "expected one of debug, info, warn");
}

void write(Level lvl, std::string_view message) {
  std::lock_guard lock(g_mutex);
  std::cerr << "[" << tag(lvl) << "] " << message << '\n';
}

}  // namespace geoslomo::log
