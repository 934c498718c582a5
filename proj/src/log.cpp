#include "mgtr/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace mgtr::log {

namespace {

Level parse_env() {
  const char* v = std::getenv("MGTR_LOG");
  if (!v) return Level::Warn;
  if (!std::strcmp(v, "error")) return Level::Error;
  if (!std::strcmp(v, "warn")) return Level::Warn;
  if (!std::strcmp(v, "info")) return Level::Info;
  if (!std::strcmp(v, "debug")) return Level::Debug;
  return Level::Warn;
}

const char* tag(Level l) {
  switch (l) {
    case Level::Error: return "error";
    case Level::Warn: return "warn";
    case Level::Info: return "info";
    case Level::Debug: return "debug";
  }
  return "?";
}

}  // namespace

Level level() {
  static Level l = parse_env();
  return l;
}

void write(Level lvl, const std::string& msg) {
  if (static_cast<int>(lvl) > static_cast<int>(level())) return;
  std::fprintf(stderr, "[mgtr %s] %s\n", tag(lvl), msg.c_str());
}

}  // namespace mgtr::log
