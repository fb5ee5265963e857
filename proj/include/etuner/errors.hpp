#pragma once

#include <stdexcept>
#include <string>

namespace etuner {

// Error taxonomy shared by every module. Callers that need to map failures to
// process exit codes (the CLI) switch on the concrete type.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::string state_dump)
      : Error(what), state_dump_(std::move(state_dump)) {}
  const std::string& state_dump() const { return state_dump_; }

 private:
  std::string state_dump_;
};

}  // namespace etuner
