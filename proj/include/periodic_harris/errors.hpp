#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace periodic_harris {

/// Base class of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed expression text. `position()` is the 0-based character offset.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " at position " + std::to_string(position)), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// A value or state outside the domain of a function or model.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or construction parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure while simulating a path.
class SimulationError : public Error {
 public:
  SimulationError(const std::string& what, std::size_t step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

/// A control program could not be executed to completion.
class ControlError : public Error {
 public:
  using Error::Error;
};

/// Symbolic expressions grew past the configured node budget.
class BlowUpError : public Error {
 public:
  BlowUpError(const std::string& word, std::size_t nodes)
      : Error("expression blow-up in bracket " + word + " (" + std::to_string(nodes) + " nodes)"),
        word_(word), nodes_(nodes) {}
  const std::string& word() const noexcept { return word_; }
  std::size_t nodes() const noexcept { return nodes_; }

 private:
  std::string word_;
  std::size_t nodes_;
};

}  // namespace periodic_harris
