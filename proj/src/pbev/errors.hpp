#pragma once

#include <stdexcept>
#include <string>

namespace pbev {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration: malformed specs, shape mismatches, unparseable input.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

// Valid configuration, out-of-domain value: behind-camera points, singular
// matrices, degenerate geometry.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(what) {}
};

}  // namespace pbev
