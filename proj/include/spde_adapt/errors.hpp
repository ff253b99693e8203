#pragma once

#include <stdexcept>
#include <string>

namespace spde_adapt {

/// A field acquired a non-finite value or left the divergence bound.
class BlowUpError : public std::runtime_error {
 public:
  explicit BlowUpError(const std::string& what) : std::runtime_error("blow-up detected: " + what) {}
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every trial of an ensemble diverged, so no error estimate exists.
class EmptyResultError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace spde_adapt
