#pragma once

#include <stdexcept>
#include <string>

namespace voltvar {

/// Invalid scenario or run parameter. `field()` names the offending field.
class ParameterError : public std::invalid_argument {
 public:
  ParameterError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A quantity outside the domain of the formula applied to it.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Base for numerical failures of a single solve.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, double last_residual, int iterations)
      : NumericalError(what), last_residual_(last_residual), iterations_(iterations) {}

  double last_residual() const noexcept { return last_residual_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double last_residual_;
  int iterations_;
};

/// Squared voltage reached zero or below during a sweep.
class InfeasibleOperatingPoint : public NumericalError {
 public:
  InfeasibleOperatingPoint(const std::string& what, int node)
      : NumericalError(what), node_(node) {}

  int node() const noexcept { return node_; }

 private:
  int node_;
};

/// No grid point / dispatch satisfies the voltage band.
class InfeasibleDispatch : public NumericalError {
 public:
  InfeasibleDispatch(const std::string& what, int node)
      : NumericalError(what), node_(node) {}

  int node() const noexcept { return node_; }

 private:
  int node_;
};

/// Savings requested against a baseline with zero losses.
class UndefinedSavings : public NumericalError {
 public:
  UndefinedSavings(const std::string& what, double dispatch_losses)
      : NumericalError(what), dispatch_losses_(dispatch_losses) {}

  double dispatch_losses() const noexcept { return dispatch_losses_; }

 private:
  double dispatch_losses_;
};

}  // namespace voltvar
