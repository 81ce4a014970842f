#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tap {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Index outside the chain an edit targets.
class BoundsError : public Error {
 public:
  using Error::Error;
};

/// Split at the first or one-past-last token of a step.
class DegenerateSplitError : public Error {
 public:
  using Error::Error;
};

/// Enumeration would exceed the configured limit.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Token is empty or contains whitespace / the step delimiter.
class InvalidTokenError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericsError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

/// Malformed input. `position` is a byte offset for binary files and a
/// 1-based line number for line-oriented files.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// Environment failed to produce a reward (network, HTTP, retries exhausted).
class EnvError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Rate fits need at least three distinct sample sizes.
class InsufficientGridError : public Error {
 public:
  using Error::Error;
};

}  // namespace tap
