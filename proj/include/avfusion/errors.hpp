#pragma once

#include <stdexcept>
#include <string>

namespace avf {

// Base class for all errors raised by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A required file or directory is missing or cannot be opened.
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// A file exists but its contents do not parse (bad header, truncated
// payload, malformed record). Messages carry enough context to locate
// the offending byte/line.
struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

// A file parses but uses an encoding or variant this library does not
// handle (e.g. 24-bit or stereo WAV).
struct UnsupportedError : Error {
    explicit UnsupportedError(const std::string& msg) : Error(msg) {}
};

// An argument violates a documented precondition (shape mismatch,
// out-of-range parameter, bad configuration value).
struct ValueError : Error {
    explicit ValueError(const std::string& msg) : Error(msg) {}
};

// An operation was attempted in a state that forbids it (stepping frozen
// parameters, replaying a consumed tape).
struct StateError : Error {
    explicit StateError(const std::string& msg) : Error(msg) {}
};

}  // namespace avf
