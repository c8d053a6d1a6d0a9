#pragma once

#include <stdexcept>
#include <string>

namespace modgrok {

// invalid run/task/optimizer configuration (bad alpha, malformed tables, ...)
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// non-finite values encountered during numeric work
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// tensor shape disagreement
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// unreadable, unwritable, or corrupt artifact files
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace modgrok
