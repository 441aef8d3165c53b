#pragma once

#include <stdexcept>
#include <string>

namespace fishdet {

/// Bad configuration or inconsistent inputs (missing column, degenerate stats,
/// mismatched checkpoints).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable or unwritable files, malformed artifacts.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A NaN or Inf escaped a forward computation or the training loss.
class NumericFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Misuse of a stateful object, e.g. backward() on an empty tape.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace fishdet
