#pragma once

#include <stdexcept>
#include <string>

namespace idbr {

/// Raised for malformed specs, configs, registry lookups and CLI input.
/// The CLI maps it to exit code 1; every other failure maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace idbr
