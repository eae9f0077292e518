#pragma once

#include <stdexcept>
#include <string>

namespace latentpath {

inline constexpr const char* version_string = "0.1.0";

// Misconfigured model/run setup (bad shapes, bad option combinations).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad runtime data fed to an otherwise well-configured component.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API misuse (e.g. stepping an optimizer before grads exist).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File/IO failures, including malformed on-disk formats.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values where finite math was required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace latentpath
