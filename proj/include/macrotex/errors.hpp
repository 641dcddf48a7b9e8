#pragma once

#include <stdexcept>
#include <string>

namespace macrotex {

// Malformed external input (weights manifest, image file, ...).
class format_error : public std::runtime_error {
 public:
  explicit format_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad key / missing mandatory field in a run configuration.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A computation produced non-finite values (divergence of the dynamics).
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Quadrature cannot reach the requested accuracy (tail bound violated).
class precision_error : public std::runtime_error {
 public:
  explicit precision_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operation applied to a chain state that is no longer usable.
class state_error : public std::logic_error {
 public:
  explicit state_error(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace macrotex
