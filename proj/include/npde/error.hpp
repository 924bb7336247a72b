#pragma once

#include <stdexcept>
#include <string>

namespace npde {

enum class ErrorKind {
  config,
  singular_system,
  insufficient_points,
  non_finite,
  ground_truth_blowup,
  training_divergence,
  no_convergence,
  io,
  format,
  version_mismatch,
  hash_mismatch,
  truncated,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Process exit status for the command-line front end.
inline int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::ground_truth_blowup:
      return 3;
    case ErrorKind::training_divergence:
      return 4;
    case ErrorKind::io:
    case ErrorKind::format:
    case ErrorKind::version_mismatch:
    case ErrorKind::hash_mismatch:
    case ErrorKind::truncated:
      return 5;
    default:
      return 2;
  }
}

}  // namespace npde
