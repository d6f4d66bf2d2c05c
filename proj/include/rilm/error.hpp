#pragma once

#include <stdexcept>
#include <string>

namespace rilm {

// All recoverable failures in the toolkit are reported through this type.
// The message starts with a short category prefix ("shape:", "io:", ...)
// so the CLI can print it as a one-line diagnostic.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rilm
