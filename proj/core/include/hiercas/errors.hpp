#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hiercas {

/// Shape disagreement between operands of a tensor operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside an operation's mathematical domain (log of a
/// non-positive value, negative time interval, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Argument that violates an operation's precondition.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Invalid or inconsistent configuration values.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed corpus line. Carries the 1-based line number when known
/// (0 otherwise).
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error(line == 0 ? what
                                     : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hiercas
