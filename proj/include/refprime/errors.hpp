#pragma once

#include <stdexcept>
#include <string>

namespace refprime {

// Bad run configuration or command usage. CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input file. Carries enough context to locate the bad record.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// A domain invariant was violated by otherwise well-formed data.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Completion endpoint failure, with the failure class preserved so callers
// can distinguish retryable from fatal conditions.
class ApiError : public std::runtime_error {
 public:
  enum class Kind { network, http, auth, rate_limit_exhausted, bad_response };

  ApiError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace refprime
