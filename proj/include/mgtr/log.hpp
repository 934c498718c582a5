#pragma once

#include <string>

namespace mgtr::log {

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Parsed once from the MGTR_LOG environment variable (error|warn|info|debug).
Level level();

void write(Level lvl, const std::string& msg);

inline void error(const std::string& msg) { write(Level::Error, msg); }
inline void warn(const std::string& msg) { write(Level::Warn, msg); }
inline void info(const std::string& msg) { write(Level::Info, msg); }
inline void debug(const std::string& msg) { write(Level::Debug, msg); }

}  // namespace mgtr::log
