#pragma once

#include <stdexcept>
#include <string>

namespace sattn {

/// Operand shapes do not fit the operation.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// An exhaustive search would exceed its configured budget.
class BudgetError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A randomized generator could not satisfy its constraints.
class GenerationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// An operation name that the autodiff tape has no rule for.
class UnsupportedOpError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

} // namespace sattn
