#pragma once

#include <stdexcept>
#include <string>

namespace photonsim {

// Precondition violations throw std::invalid_argument. The two types below
// carry the distinct CLI exit codes.

/// Bad or inconsistent run configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Integrator, quadrature or fit failure (CLI exit code 3).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace photonsim
