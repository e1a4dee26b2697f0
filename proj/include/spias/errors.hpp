#pragma once

#include <stdexcept>
#include <string>

namespace spias {

/// Bad user input: malformed files, invalid parameters, incompatible shapes.
/// Maps to process exit code 2.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

/// A numerical operation failed (factorization breakdown, solver divergence).
/// Maps to process exit code 1.
class numerical_error : public std::runtime_error {
 public:
  explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace spias
