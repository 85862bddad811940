#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ctgrpo {

/// Malformed arguments: unknown token ids, empty batches, out-of-bounds boxes.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An operation that needs at least one element received none.
class EmptyInput : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

/// A parameter set was used outside its role, e.g. differentiating a frozen reference.
class RoleViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// An importance ratio (or other exponentiated quantity) left the finite range.
class NumericOverflow : public std::overflow_error {
 public:
  NumericOverflow(const std::string& what, std::size_t index)
      : std::overflow_error(what + " (response " + std::to_string(index) + ")"), index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

}  // namespace ctgrpo
