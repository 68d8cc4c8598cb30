#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace eusml {

enum class ErrorKind {
  parameter,         // invalid argument value (bins out of range, sigma <= 0, ...)
  input,             // malformed or inconsistent input data
  configuration,     // config / model / reference mismatch
  validation,        // request-level validation (labeling service)
  state,             // illegal state transition
  immutable,         // mutation of a finalized object
  not_found,
  consistency,       // manifest-level consistency violation
  undefined_metric,  // metric undefined on the given confusion matrix
  io,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parameter: return "parameter_error";
    case ErrorKind::input: return "input_error";
    case ErrorKind::configuration: return "configuration_error";
    case ErrorKind::validation: return "validation_error";
    case ErrorKind::state: return "state_conflict";
    case ErrorKind::immutable: return "immutable";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::consistency: return "consistency_error";
    case ErrorKind::undefined_metric: return "undefined_metric";
    case ErrorKind::io: return "io_error";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace eusml
