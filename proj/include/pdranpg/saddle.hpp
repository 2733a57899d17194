#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "pdranpg/cmdp.hpp"
#include "pdranpg/errors.hpp"
#include "pdranpg/oracle.hpp"

namespace pdranpg {

template <typename Scalar = double>
struct saddle_point {
  matrix_t<Scalar> pi_star_tau;  // S x A
  Scalar lambda_star_tau{};
  Scalar lagrangian_value{};
  Scalar primal_residual{};  // max |A_g| at the solution (0 at an exact best response)
  Scalar dual_residual{};    // |lambda - clip(-J_c(pi)/tau, 0, lambda_max)|
  long dual_iterations = 0;
};

// J_g^pi by one direct Bellman solve.
template <typename Scalar>
Scalar policy_value(const cmdp_spec<Scalar>& spec, const matrix_t<Scalar>& pi,
                    const matrix_t<Scalar>& g) {
  const index_t S = spec.n_states, A = spec.n_actions;
  matrix_t<Scalar> p_pi = matrix_t<Scalar>::Zero(S, S);
  for (index_t s = 0; s < S; ++s)
    for (index_t a = 0; a < A; ++a) p_pi.row(s) += pi(s, a) * spec.transition_row(s, a);
  const vector_t<Scalar> g_pi = (pi.array() * g.array()).rowwise().sum();
  const vector_t<Scalar> v =
      (matrix_t<Scalar>::Identity(S, S) - spec.gamma * p_pi).partialPivLu().solve(g_pi);
  return spec.rho.dot(v);
}

// Entropy-regularized best response to utility u: soft value iteration
// V(s) = tau * logsumexp_a((u(s,a) + gamma P V)/tau), pi = softmax(Q~/tau).
// v is warm-started in place; on exit rho.v equals J_{u}^pi + tau*H(pi).
template <typename Scalar>
matrix_t<Scalar> soft_value_iteration(const cmdp_spec<Scalar>& spec, const matrix_t<Scalar>& u,
                                      Scalar tau, vector_t<Scalar>& v, Scalar tol = Scalar(1e-13),
                                      long max_iters = 200000) {
  const index_t S = spec.n_states, A = spec.n_actions;
  if (v.size() != S) v = vector_t<Scalar>::Zero(S);
  matrix_t<Scalar> q(S, A);
  for (long it = 0; it < max_iters; ++it) {
    for (index_t s = 0; s < S; ++s)
      for (index_t a = 0; a < A; ++a) q(s, a) = u(s, a) + spec.gamma * spec.transition_row(s, a).dot(v);
    Scalar delta = 0;
    for (index_t s = 0; s < S; ++s) {
      const Scalar shift = q.row(s).maxCoeff();
      const Scalar next = shift + tau * std::log(((q.row(s).array() - shift) / tau).exp().sum());
      delta = std::max(delta, std::abs(next - v(s)));
      v(s) = next;
    }
    if (delta < tol * std::max(Scalar(1), v.cwiseAbs().maxCoeff())) break;
  }
  matrix_t<Scalar> pi(S, A);
  for (index_t s = 0; s < S; ++s) {
    for (index_t a = 0; a < A; ++a) q(s, a) = u(s, a) + spec.gamma * spec.transition_row(s, a).dot(v);
    pi.row(s) = ((q.row(s).array() - v(s)) / tau).exp();
    pi.row(s) /= pi.row(s).sum();
  }
  return pi;
}

// Exact-gradient primal-dual iteration for the regularized saddle point
// (pi*_tau, lambda*_tau): soft-value-iteration best response alternated with
// the projected dual step lambda <- clip((1 - eta tau) lambda - eta J_c),
// run until the successive Lagrangian change drops below 1e-10 and the pair
// is mutually consistent.
template <typename Scalar>
saddle_point<Scalar> solve_regularized_saddle(const cmdp_spec<Scalar>& spec, Scalar tau,
                                              Scalar lambda_max) {
  if (!(tau > Scalar(0))) throw validation_error("tau: regularized saddle requires tau > 0");
  if (!(lambda_max > Scalar(0))) throw validation_error("lambda_max: must be positive");
  const Scalar one_minus_gamma = Scalar(1) - spec.gamma;
  const Scalar eta = Scalar(1) / (tau + Scalar(8) / (one_minus_gamma * one_minus_gamma * tau));
  const long max_iters = 1000000;

  auto clip = [&](Scalar x) { return std::min(std::max(x, Scalar(0)), lambda_max); };

  Scalar lambda = 0;
  vector_t<Scalar> v;  // warm-started across dual steps
  matrix_t<Scalar> pi;
  Scalar jc = 0;
  Scalar lag = 0;
  Scalar last_lag = std::numeric_limits<Scalar>::infinity();
  Scalar consistency = std::numeric_limits<Scalar>::infinity();
  long it = 0;
  bool settled = false;
  for (; it < max_iters; ++it) {
    pi = soft_value_iteration(spec, matrix_t<Scalar>(spec.reward + lambda * spec.cost), tau, v);
    jc = policy_value(spec, pi, spec.cost);
    lag = spec.rho.dot(v) + tau * lambda * lambda / Scalar(2);
    consistency = std::abs(lambda - clip(-jc / tau));
    if (std::abs(lag - last_lag) < Scalar(1e-10) && consistency < Scalar(1e-9)) {
      settled = true;
      break;
    }
    last_lag = lag;
    lambda = clip(lambda * (Scalar(1) - eta * tau) - eta * jc);
  }
  if (!settled)
    throw convergence_error("regularized saddle: dual iteration cap reached (residual " +
                                std::to_string(static_cast<double>(consistency)) + ")",
                            static_cast<double>(consistency));

  saddle_point<Scalar> out;
  out.pi_star_tau = pi;
  out.lambda_star_tau = lambda;
  out.lagrangian_value = lag;
  out.dual_residual = consistency;
  out.dual_iterations = it + 1;

  // Best-response consistency: the advantage of g = r + lambda c + tau psi
  // vanishes identically at a soft-optimal policy.
  const matrix_t<Scalar> log_probs = pi.array().log();
  const auto rep =
      policy_evaluation(spec, pi, utility_fn<Scalar>::regularized(spec, lambda, tau, log_probs));
  out.primal_residual = rep.adv.cwiseAbs().maxCoeff();
  return out;
}

}  // namespace pdranpg
