#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace geoslomo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violated precondition on shapes, argument order or call sequence.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Data that is structurally readable but violates a domain invariant
/// (non-finite pixels, frames smaller than 8x8, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Invalid user-supplied parameter (scene, configuration, hyper-parameter).
class ParameterError : public Error {
 public:
  ParameterError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Coordinate or index outside the valid grid.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// Statistics that cannot be computed from the data (e.g. zero variance).
class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed frame container. Carries the byte offset of the offending field.
class FormatError : public Error {
 public:
  FormatError(std::uint64_t offset, const std::string& what)
      : Error("format error at byte " + std::to_string(offset) + ": " + what),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// Non-finite loss during optimization.
class DivergenceError : public Error {
 public:
  DivergenceError(std::int64_t step, const std::string& what)
      : Error("training diverged at step " + std::to_string(step) + ": " + what),
        step_(step) {}

  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

}  // namespace geoslomo
