#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace chunkgrpo {

/// Caller passed something outside an operation's domain.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An object was found in a state that violates its invariants
/// (e.g. a parameter vector holding NaN).
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computation produced a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace chunkgrpo
