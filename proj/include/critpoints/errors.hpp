#ifndef CRITPOINTS_ERRORS_HPP
#define CRITPOINTS_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace critpoints {

/// Bad caller input: out-of-range arguments, malformed configs.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Model parameters outside the domain where the math is defined
/// (e.g. a degenerate GOI covariance parameter).
class ParameterError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A numerical procedure failed to converge or produced non-finite output.
class DiagnosticError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The kernel is outside the class the formulas apply to (CRI <= 2, e.g. ReLU).
class UnsupportedKernelError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Operation requested in the wrong depth regime.
class RegimeError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// gamma_L >= (d+2)/2: the Kac-Rice nondegeneracy condition fails.
class DegeneracyError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace critpoints

#endif  // CRITPOINTS_ERRORS_HPP
