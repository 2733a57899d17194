#pragma once

#include <Eigen/Core>
#include <utility>

#include "pdranpg/cmdp.hpp"
#include "pdranpg/policy.hpp"

namespace pdranpg {

// One draw of the sampling procedure: the constraint-value estimate and the
// inner-loop gradient estimate, plus diagnostics.
template <typename Scalar = double>
struct grad_sample {
  Scalar j_c_hat{};
  vector_t<Scalar> grad_hat;
  index_t s_hat = 0;
  vector_t<Scalar> adv_hat;  // per-action advantage estimates at s_hat
  long samples_used = 0;     // total (state, action) pairs across all rollouts
};

// Probability and log-probability tables for one theta; computed once and
// shared across the many estimator calls of an inner loop.
template <typename Scalar = double>
struct policy_tables {
  matrix_t<Scalar> probs;
  matrix_t<Scalar> log_probs;
};

template <typename Scalar>
policy_tables<Scalar> make_policy_tables(const policy_model<Scalar>& model,
                                         const vector_t<Scalar>& theta) {
  policy_tables<Scalar> t;
  t.log_probs = model.log_prob_table(theta);
  t.probs = t.log_probs.array().exp();
  return t;
}

namespace detail {

// Geometric-horizon rollout returning the accumulated utility, terminal state
// and the number of (s,a) pairs consumed. One stream per rollout.
template <typename Scalar>
struct rollout_sum {
  Scalar total{};
  index_t terminal_state = 0;
  index_t length = 0;  // T + 1
};

template <typename Scalar>
rollout_sum<Scalar> geometric_rollout_sum(const cmdp_spec<Scalar>& spec,
                                          const matrix_t<Scalar>& policy,
                                          const matrix_t<Scalar>& g, const start_directive& start,
                                          rng_stream rng) {
  const index_t horizon = sample_geometric_horizon(static_cast<double>(spec.gamma), rng);
  rollout_sum<Scalar> out;
  index_t s;
  if (start.k == start_directive::kind::from_rho)
    s = sample_categorical(spec.rho, rng);
  else
    s = start.s;
  index_t a = start.k == start_directive::kind::fixed_state_action
                  ? start.a
                  : sample_categorical(policy.row(s), rng);
  out.total = g(s, a);
  for (index_t j = 0; j < horizon; ++j) {
    s = sample_categorical(spec.transition_row(s, a), rng);
    a = sample_categorical(policy.row(s), rng);
    out.total += g(s, a);
  }
  out.terminal_state = s;
  out.length = horizon + 1;
  return out;
}

}  // namespace detail

// The full sampling procedure at (theta, omega, lambda, tau):
//   (i)   one geometric rollout from rho -> J_c_hat and s_hat ~ d^pi;
//   (ii)  one geometric rollout from s_hat -> V_hat of g = r + lambda c + tau psi;
//   (iii) one geometric rollout from (s_hat, a) per action -> Q_hat, A_hat;
//   (iv)  F_hat and H_hat as exact sums over a ~ pi(s_hat);
//   (v)   grad_hat = F_hat omega - H_hat / (1 - gamma).
// The J_c, V and per-action Q rollouts run on pre-split independent streams,
// so concurrent per-action execution is bit-identical to sequential.
template <typename Scalar>
grad_sample<Scalar> estimate(const cmdp_spec<Scalar>& spec, const policy_model<Scalar>& model,
                             const policy_tables<Scalar>& tables, const vector_t<Scalar>& omega,
                             Scalar lambda, Scalar tau, rng_stream rng) {
  const index_t A = spec.n_actions;
  const matrix_t<Scalar> g = spec.reward + lambda * spec.cost - tau * tables.log_probs;

  grad_sample<Scalar> out;
  const auto jc_roll = detail::geometric_rollout_sum<Scalar>(
      spec, tables.probs, spec.cost, start_directive::from_rho(), rng.child(0));
  out.samples_used = jc_roll.length;
  out.j_c_hat = jc_roll.total;
  out.s_hat = jc_roll.terminal_state;

  const auto v_roll = detail::geometric_rollout_sum<Scalar>(
      spec, tables.probs, g, start_directive::state(out.s_hat), rng.child(1));
  out.samples_used += v_roll.length;

  out.adv_hat.resize(A);
  for (index_t a = 0; a < A; ++a) {
    const auto q_roll = detail::geometric_rollout_sum<Scalar>(
        spec, tables.probs, g, start_directive::state_action(out.s_hat, a), rng.child(2 + a));
    out.samples_used += q_roll.length;
    out.adv_hat(a) = q_roll.total - v_roll.total;
  }

  const vector_t<Scalar> probs = tables.probs.row(out.s_hat).transpose();
  vector_t<Scalar> h_hat = vector_t<Scalar>::Zero(model.dim());
  out.grad_hat = vector_t<Scalar>::Zero(model.dim());
  for (index_t a = 0; a < A; ++a) {
    const vector_t<Scalar> sc = model.score_given_probs(probs, out.s_hat, a);
    out.grad_hat.noalias() += probs(a) * sc.dot(omega) * sc;  // F_hat omega
    h_hat.noalias() += probs(a) * out.adv_hat(a) * sc;
  }
  out.grad_hat.noalias() -= h_hat / (Scalar(1) - spec.gamma);
  return out;
}

template <typename Scalar>
grad_sample<Scalar> estimate(const cmdp_spec<Scalar>& spec, const policy_model<Scalar>& model,
                             const vector_t<Scalar>& theta, const vector_t<Scalar>& omega,
                             Scalar lambda, Scalar tau, rng_stream rng) {
  return estimate(spec, model, make_policy_tables(model, theta), omega, lambda, tau,
                  std::move(rng));
}

// Lines (i) only: an unbiased J_c draw, independent of the gradient path.
template <typename Scalar>
std::pair<Scalar, long> estimate_jc_only(const cmdp_spec<Scalar>& spec,
                                         const policy_tables<Scalar>& tables, rng_stream rng) {
  const auto roll = detail::geometric_rollout_sum<Scalar>(
      spec, tables.probs, spec.cost, start_directive::from_rho(), rng.child(0));
  return {roll.total, roll.length};
}

template <typename Scalar>
std::pair<Scalar, long> estimate_jc_only(const cmdp_spec<Scalar>& spec,
                                         const policy_model<Scalar>& model,
                                         const vector_t<Scalar>& theta, rng_stream rng) {
  return estimate_jc_only(spec, make_policy_tables(model, theta), std::move(rng));
}

}  // namespace pdranpg
