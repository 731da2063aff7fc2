#pragma once

#include <stdexcept>
#include <string>

namespace prescript {

/// Malformed or inconsistent input (dimension mismatch, invalid weights, ...).
class InvalidInput : public std::runtime_error {
 public:
  explicit InvalidInput(const std::string& what) : std::runtime_error(what) {}
};

/// A solver hit its iteration or node budget without converging.
class SolverStalled : public std::runtime_error {
 public:
  SolverStalled(const std::string& what, long iterations)
      : std::runtime_error(what + " after " + std::to_string(iterations) + " iterations"),
        iterations_(iterations) {}

  long iterations() const { return iterations_; }

 private:
  long iterations_;
};

/// Numerical failure (e.g. a factorization that cannot be repaired).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// A convexity assumption required by an accelerated method was violated.
class NonConvexDetected : public std::runtime_error {
 public:
  explicit NonConvexDetected(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace prescript
