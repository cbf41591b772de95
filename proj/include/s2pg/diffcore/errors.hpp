// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace s2pg {

/// Shapes of operands do not conform.
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

/// A computation produced NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// An argument is outside the mathematical domain of the operation.
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

/// Misuse of the differentiation tape (detached loss, consumed tape, mixed tapes).
class TapeError : public std::logic_error {
 public:
  explicit TapeError(const std::string& what) : std::logic_error(what) {}
};

/// Invalid input to a higher level routine (empty episode, too few samples, ...).
class InputError : public std::invalid_argument {
 public:
  explicit InputError(const std::string& what) : std::invalid_argument(what) {}
};

/// API called in the wrong state (stepping a finished episode, ...).
class UsageError : public std::logic_error {
 public:
  explicit UsageError(const std::string& what) : std::logic_error(what) {}
};

}  // namespace s2pg
