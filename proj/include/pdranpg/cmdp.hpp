#pragma once

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "pdranpg/errors.hpp"
#include "pdranpg/rng.hpp"

namespace pdranpg {

template <typename Scalar>
using matrix_t = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using vector_t = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using index_t = Eigen::Index;

// Finite CMDP (S, A, r, c, P, gamma, rho). Transition rows are stored flat,
// row s*A + a over next states. c_slat records the instance's known Slater
// margin (0 when unspecified).
template <typename Scalar = double>
struct cmdp_spec {
  index_t n_states = 0;
  index_t n_actions = 0;
  matrix_t<Scalar> reward;      // S x A, entries in [0, 1]
  matrix_t<Scalar> cost;        // S x A, entries in [-1, 1]
  matrix_t<Scalar> transition;  // (S*A) x S, each row a probability vector
  Scalar gamma{};
  vector_t<Scalar> rho;         // initial distribution over S
  Scalar c_slat{};

  auto transition_row(index_t s, index_t a) const { return transition.row(s * n_actions + a); }

  void validate() const {
    const Scalar tol = Scalar(1e-12);
    if (n_states <= 0) throw validation_error("n_states: must be positive");
    if (n_actions <= 0) throw validation_error("n_actions: must be positive");
    if (!(gamma >= Scalar(0) && gamma < Scalar(1)))
      throw validation_error("gamma: must lie in [0,1)");
    auto expect_shape = [&](const auto& m, index_t rows, index_t cols, const char* name) {
      if (m.rows() != rows || m.cols() != cols)
        throw validation_error(std::string(name) + ": wrong shape");
    };
    expect_shape(reward, n_states, n_actions, "reward");
    expect_shape(cost, n_states, n_actions, "cost");
    expect_shape(transition, n_states * n_actions, n_states, "transition");
    if (rho.size() != n_states) throw validation_error("rho: wrong length");
    for (index_t s = 0; s < n_states; ++s) {
      if (rho(s) < Scalar(0))
        throw validation_error("rho[" + std::to_string(s) + "]: negative entry");
      for (index_t a = 0; a < n_actions; ++a) {
        const std::string at = "[" + std::to_string(s) + "][" + std::to_string(a) + "]";
        if (!(reward(s, a) >= Scalar(0) && reward(s, a) <= Scalar(1)))
          throw validation_error("reward" + at + ": outside [0,1]");
        if (!(cost(s, a) >= Scalar(-1) && cost(s, a) <= Scalar(1)))
          throw validation_error("cost" + at + ": outside [-1,1]");
        const auto row = transition_row(s, a);
        if ((row.array() < Scalar(0)).any())
          throw validation_error("transition" + at + ": negative entry");
        if (std::abs(row.sum() - Scalar(1)) > tol)
          throw validation_error("transition" + at + ": row sums to " +
                                 std::to_string(static_cast<double>(row.sum())));
      }
    }
    if (std::abs(rho.sum() - Scalar(1)) > tol)
      throw validation_error("rho: sums to " + std::to_string(static_cast<double>(rho.sum())));
  }
};

// Per-(s,a) utility g, materialized as a dense table. The regularized kind
// r + lambda*c + tau*psi builds psi from log-probabilities so that near-zero
// action probabilities never pass through log(prob).
template <typename Scalar = double>
struct utility_fn {
  matrix_t<Scalar> table;  // S x A

  Scalar operator()(index_t s, index_t a) const { return table(s, a); }

  static utility_fn reward(const cmdp_spec<Scalar>& m) { return {m.reward}; }
  static utility_fn cost(const cmdp_spec<Scalar>& m) { return {m.cost}; }
  static utility_fn combined(const cmdp_spec<Scalar>& m, Scalar lambda) {
    return {m.reward + lambda * m.cost};
  }
  // psi(s,a) = -log pi(a|s), supplied as a log-probability table.
  static utility_fn regularized(const cmdp_spec<Scalar>& m, Scalar lambda, Scalar tau,
                                const matrix_t<Scalar>& log_probs) {
    return {m.reward + lambda * m.cost - tau * log_probs};
  }
  static utility_fn entropy_only(const matrix_t<Scalar>& log_probs) {
    return {matrix_t<Scalar>(-log_probs)};
  }
};

struct trajectory {
  std::vector<std::pair<index_t, index_t>> steps;  // exactly horizon+1 (state, action) pairs
  index_t horizon() const { return static_cast<index_t>(steps.size()) - 1; }
};

// Inverse CDF of Geo(1-gamma) on support {0,1,...}: P(T=j) = (1-gamma)*gamma^j.
inline index_t geometric_from_uniform(double gamma, double u) {
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw validation_error("gamma: geometric horizon requires gamma in [0,1)");
  if (gamma == 0.0) return 0;
  // T = floor(log(1-u)/log(gamma)); u in [0,1) keeps the argument in (0,1].
  return static_cast<index_t>(std::floor(std::log1p(-u) / std::log(gamma)));
}

inline index_t sample_geometric_horizon(double gamma, rng_stream& rng) {
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw validation_error("gamma: geometric horizon requires gamma in [0,1)");
  return geometric_from_uniform(gamma, rng.next_double());
}

// Draw from a probability vector by scanning the CDF; the final index absorbs
// rounding residue.
template <typename Derived>
index_t sample_categorical(const Eigen::MatrixBase<Derived>& probs, rng_stream& rng) {
  const double u = rng.next_double();
  double acc = 0.0;
  const index_t n = probs.size();
  for (index_t i = 0; i < n; ++i) {
    acc += static_cast<double>(probs(i));
    if (u < acc) return i;
  }
  return n - 1;
}

struct start_directive {
  enum class kind { from_rho, fixed_state, fixed_state_action };
  kind k = kind::from_rho;
  index_t s = 0;
  index_t a = 0;

  static start_directive from_rho() { return {}; }
  static start_directive state(index_t s) { return {kind::fixed_state, s, 0}; }
  static start_directive state_action(index_t s, index_t a) {
    return {kind::fixed_state_action, s, a};
  }
};

// Simulate horizon+1 (state, action) pairs under a tabular policy table
// (S x A action probabilities). All randomness comes from rng.
template <typename Scalar>
trajectory rollout(const cmdp_spec<Scalar>& spec, const matrix_t<Scalar>& policy,
                   const start_directive& start, index_t horizon, rng_stream& rng) {
  if (policy.rows() != spec.n_states || policy.cols() != spec.n_actions)
    throw validation_error("policy: shape mismatch with spec");
  trajectory traj;
  traj.steps.reserve(static_cast<std::size_t>(horizon) + 1);
  index_t s;
  switch (start.k) {
    case start_directive::kind::from_rho:
      s = sample_categorical(spec.rho, rng);
      break;
    default:
      if (start.s < 0 || start.s >= spec.n_states)
        throw validation_error("start: state out of range");
      s = start.s;
  }
  index_t a;
  if (start.k == start_directive::kind::fixed_state_action) {
    if (start.a < 0 || start.a >= spec.n_actions)
      throw validation_error("start: action out of range");
    a = start.a;
  } else {
    a = sample_categorical(policy.row(s), rng);
  }
  traj.steps.emplace_back(s, a);
  for (index_t j = 0; j < horizon; ++j) {
    s = sample_categorical(spec.transition_row(s, a), rng);
    a = sample_categorical(policy.row(s), rng);
    traj.steps.emplace_back(s, a);
  }
  return traj;
}

// Undiscounted utility sum over the whole trajectory; the geometric horizon
// supplies the discounting in expectation.
template <typename Scalar>
Scalar accumulate_utility(const trajectory& traj, const utility_fn<Scalar>& g) {
  Scalar total = 0;
  for (const auto& [s, a] : traj.steps) {
    const Scalar value = g(s, a);
    if (!std::isfinite(static_cast<double>(value)))
      throw std::domain_error("utility: non-finite value at (s=" + std::to_string(s) +
                              ", a=" + std::to_string(a) + ")");
    total += value;
  }
  return total;
}

}  // namespace pdranpg
