#ifndef BWSHARE_ERRORS_HPP
#define BWSHARE_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bwshare {

/// Bad input: malformed configuration, invariant violations, bad arguments.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Base for failures of a numerical procedure on valid input.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SolverFailure : public NumericalError {
 public:
  SolverFailure(const std::string& what, double residual)
      : NumericalError(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class InfeasibleState : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// The frozen chain did not settle inside the largest truncation box: it is
/// most likely not ergodic at this surge value.
class StationaryDivergence : public NumericalError {
 public:
  StationaryDivergence(const std::string& what, double boundary_mass)
      : NumericalError(what), boundary_mass_(boundary_mass) {}
  double boundary_mass() const { return boundary_mass_; }

 private:
  double boundary_mass_;
};

class NumericalInstability : public NumericalError {
 public:
  NumericalInstability(const std::string& what, std::size_t last_stable)
      : NumericalError(what), last_stable_(last_stable) {}
  std::size_t last_stable_index() const { return last_stable_; }

 private:
  std::size_t last_stable_;
};

}  // namespace bwshare

#endif  // BWSHARE_ERRORS_HPP
