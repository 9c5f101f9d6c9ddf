#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace evac3d {

/// Malformed input file. Carries the 1-based line number for text formats
/// (0 for binary formats).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed input that violates a domain invariant (pixel out of sensor
/// bounds, unsorted timestamps, open mesh, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Query time outside the trajectory's sample range.
class ExtrapolationError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// The carved volume does not enclose a cavity: viewpoint coverage was
/// insufficient to separate the object from exterior space.
class ReconstructionFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Optimization produced a non-finite value.
class NumericalAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace evac3d
