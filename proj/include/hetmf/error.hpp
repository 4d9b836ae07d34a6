#pragma once

#include <stdexcept>
#include <string>

namespace hetmf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid model, rule, or state vector.
class ModelError : public Error {
 public:
  using Error::Error;
};

// Malformed or schema-violating model file.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Adaptive integration failed (step size underflow, too many steps).
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double time) : Error(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

// Iterative method did not reach its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual) : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

// Problem too large for the requested method (state cap, memory budget).
class CapacityError : public Error {
 public:
  using Error::Error;
};

// Linearization at a fixed point is not asymptotically stable or is singular.
class StabilityError : public Error {
 public:
  using Error::Error;
};

// Global chain has more than one recurrent class reachable from the start.
class ReducibleChainError : public Error {
 public:
  using Error::Error;
};

}  // namespace hetmf
