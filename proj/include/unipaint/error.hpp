#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace unipaint {

enum class ErrorKind {
  InvalidInput,
  ShapeMismatch,
  OutOfRange,
  Validation,
  Version,
  Corrupt,
  NonFinite,
  Conflict,
  NotFound,
  Io,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Library-wide exception. `field` names the offending input for validation
/// failures (e.g. "tau", "stroke") and is empty otherwise.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message, std::string field = {})
      : std::runtime_error(message), kind_(kind), field_(std::move(field)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& field() const noexcept { return field_; }

 private:
  ErrorKind kind_;
  std::string field_;
};

}  // namespace unipaint
