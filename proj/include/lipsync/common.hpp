#pragma once

#include <stdexcept>
#include <string>

namespace lipsync {

// Bad data fed in from outside (files, waveforms, command line).
struct InputError : std::runtime_error {
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Missing or inconsistent run configuration (weights file absent, backbone
// without the requested taps, checkpoint/config mismatch).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// API contract violations (shape mismatches and the like) throw
// std::invalid_argument via check_arg.
inline void check_arg(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

inline void check_input(bool ok, const std::string& msg) {
  if (!ok) throw InputError(msg);
}

inline void check_config(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace lipsync
