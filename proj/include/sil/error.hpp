#pragma once

#include <stdexcept>
#include <string>

namespace sil {

// Bad shapes, malformed maps or config values. The CLI maps it to exit 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// API misuse: stepping a finished episode, backprop without a forward cache.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A numeric computation failed to produce a usable result.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sil
