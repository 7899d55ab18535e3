#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace llmref {

// Precondition violations (empty reference lists, n == 0, unknown ids...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A statistic is undefined for the given data (zero variance, all ties).
class DegenerateInput : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// An LLM response could not be parsed into the requested candidates.
class MalformedResponse : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Transport failure that should abort a generation run (auth, connection).
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Transport failure worth another attempt (HTTP 429, 5xx, timeouts).
class TransientTransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LoadError : public std::runtime_error {
 public:
  LoadError(std::string file, std::size_t line, const std::string& what)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + what),
        file_(std::move(file)),
        line_(line) {}

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

}  // namespace llmref
