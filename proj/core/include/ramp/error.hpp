#pragma once

#include <stdexcept>
#include <string>

namespace ramp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text (XML, SWF, JSON). Carries the 1-based line when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line = 0)
      : Error(line > 0 ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Wire-level violation; the connection that produced it must be dropped.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A command named an auction, unit, or reservation that does not exist.
class NotFound : public Error {
 public:
  using Error::Error;
};

/// A command that is not valid in the target's current state.
class Conflict : public Error {
 public:
  using Error::Error;
};

}  // namespace ramp
