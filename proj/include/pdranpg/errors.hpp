#pragma once

#include <stdexcept>
#include <string>

namespace pdranpg {

// Input data failed a structural invariant (bad row sum, value out of range, ...).
// The message carries the offending index path, e.g. "transition[2][1]".
class validation_error : public std::invalid_argument {
 public:
  explicit validation_error(const std::string& what) : std::invalid_argument(what) {}
};

// The constrained problem has no feasible policy; carries the best attainable J_c.
class infeasible_error : public std::runtime_error {
 public:
  infeasible_error(const std::string& what, double max_attainable_jc)
      : std::runtime_error(what), max_attainable_jc(max_attainable_jc) {}
  double max_attainable_jc;
};

// A derived hyperparameter schedule violates a precondition (names the condition).
class schedule_error : public std::invalid_argument {
 public:
  explicit schedule_error(const std::string& what) : std::invalid_argument(what) {}
};

// Non-finite iterate encountered during optimization.
class diverged_error : public std::runtime_error {
 public:
  explicit diverged_error(const std::string& what) : std::runtime_error(what) {}
};

// An iterative solver exhausted its iteration cap; carries residual diagnostics.
class convergence_error : public std::runtime_error {
 public:
  convergence_error(const std::string& what, double residual)
      : std::runtime_error(what), residual(residual) {}
  double residual;
};

}  // namespace pdranpg
