#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bevseg {

enum class ErrorKind {
  invalid_config,
  invalid_input,
  invalid_state,
  behind_camera,
  not_found,
  malformed_header,
  truncated,
  invalid_label,
  undefined_metric,
  generation,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_config: return "invalid-config";
    case ErrorKind::invalid_input: return "invalid-input";
    case ErrorKind::invalid_state: return "invalid-state";
    case ErrorKind::behind_camera: return "behind-camera";
    case ErrorKind::not_found: return "not-found";
    case ErrorKind::malformed_header: return "malformed-header";
    case ErrorKind::truncated: return "truncated";
    case ErrorKind::invalid_label: return "invalid-label";
    case ErrorKind::undefined_metric: return "undefined-metric";
    case ErrorKind::generation: return "generation";
  }
  return "unknown";
}

// Every failure raised by the library carries the module that raised it and a
// kind that callers (and the CLI's machine-readable error line) can switch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string module, const std::string& message)
      : std::runtime_error(module + ": " + message),
        kind_(kind),
        module_(std::move(module)),
        detail_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& module() const noexcept { return module_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string module_;
  std::string detail_;
};

}  // namespace bevseg
