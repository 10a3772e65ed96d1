#pragma once

#include <stdexcept>
#include <string>

namespace ddrdro {

// Caller supplied an argument outside an operation's domain (bad k, alpha, sizes, flags).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input data or a file violates its schema or a type invariant.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An optimization problem has no feasible point (e.g. every coupling has infinite cost).
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ddrdro
