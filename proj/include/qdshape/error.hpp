#pragma once

#include <stdexcept>
#include <string>

namespace qdshape {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A value violates a documented precondition or type invariant.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Scenario configuration problem; carries the offending key path.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(key + ": " + what), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace qdshape
