#pragma once

#include <stdexcept>
#include <string>

namespace cotdr {

// Bad arguments or violated preconditions.
class invalid_input : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or unreadable file content.
class format_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A measurement or fit that could not produce a usable result.
class analysis_error : public std::runtime_error {
 public:
  explicit analysis_error(const std::string& what, double best_residual = -1.0)
      : std::runtime_error(what), best_residual_(best_residual) {}

  // Residual of the best rejected candidate, or -1 when not applicable.
  double best_residual() const { return best_residual_; }

 private:
  double best_residual_;
};

}  // namespace cotdr
