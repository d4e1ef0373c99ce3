#pragma once

#include <stdexcept>
#include <string>

namespace refprice {

/// Caller supplied a value outside the admissible domain (price out of box, bad config).
class InvalidInput : public std::invalid_argument {
 public:
  explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

/// Arguments are individually valid but inconsistent with each other
/// (dimension mismatch, state length not matching the period).
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

/// Numerical failure that should not occur in exact arithmetic.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractViolation(msg);
}

}  // namespace detail
}  // namespace refprice
