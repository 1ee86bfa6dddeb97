#pragma once

// Minimal leveled logging to stderr. Level comes from PF_LOG_LEVEL
// (error | info | debug), default info.

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <string_view>

namespace pf::logging {

enum class Level { Error = 0, Info = 1, Debug = 2 };

inline Level parse_level(std::string_view s) {
    if (s == "error") return Level::Error;
    if (s == "debug") return Level::Debug;
    return Level::Info;
}

inline Level& threshold() {
    static Level level = [] {
        const char* env = std::getenv("PF_LOG_LEVEL");
        return env ? parse_level(env) : Level::Info;
    }();
    return level;
}

template <class... Args>
void write(Level lvl, const char* tag, const Args&... args) {
    if (lvl > threshold()) return;
    std::ostringstream os;
    os << '[' << tag << "] ";
    (os << ... << args);
    os << '\n';
    std::cerr << os.str();
}

template <class... Args>
void error(const Args&... args) { write(Level::Error, "error", args...); }
template <class... Args>
void info(const Args&... args) { write(Level::Info, "info", args...); }
template <class... Args>
void debug(const Args&... args) { write(Level::Debug, "debug", args...); }

}  // namespace pf::logging
