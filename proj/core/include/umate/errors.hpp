#pragma once

#include <stdexcept>
#include <string>

namespace umate {

// Precondition or invariant violation. CLI exit code 2.
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values or numerically unusable regimes. CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed files or version mismatches. CLI exit code 4.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// A metric that cannot be evaluated on the given sample (e.g. fewer than
// eight vertices for the periodicity metric). Reported, not fatal.
class MetricInapplicable : public std::runtime_error {
 public:
  explicit MetricInapplicable(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace umate
