#pragma once

#include <stdexcept>
#include <string>

namespace selfsim {

/// Precondition violations: bad parameters, points outside a chart.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation ran but could not produce a trustworthy answer
/// (unstabilized slope, exhausted precision, ill-conditioned fit).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace selfsim
