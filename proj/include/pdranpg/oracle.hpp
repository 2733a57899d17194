#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "pdranpg/cmdp.hpp"
#include "pdranpg/policy.hpp"

namespace pdranpg {

// Every ground-truth quantity attached to one (policy, utility) pair:
// values, Q table, advantages, occupancy measures and the scalar objective.
template <typename Scalar = double>
struct oracle_report {
  vector_t<Scalar> v;            // S
  matrix_t<Scalar> q;            // S x A
  matrix_t<Scalar> adv;          // S x A, q - v
  vector_t<Scalar> occupancy_d;  // S, sums to 1
  matrix_t<Scalar> occupancy_nu; // S x A, d(s) * pi(a|s)
  Scalar j_value{};              // rho . v
};

// State-to-state kernel P_pi and the factorized Bellman operator for one
// policy; reusable across utility functions.
template <typename Scalar>
struct bellman_context {
  matrix_t<Scalar> p_pi;                           // S x S
  Eigen::PartialPivLU<matrix_t<Scalar>> value_lu;  // I - gamma*P_pi
  Eigen::PartialPivLU<matrix_t<Scalar>> flow_lu;   // I - gamma*P_pi^T

  bellman_context(const cmdp_spec<Scalar>& spec, const matrix_t<Scalar>& policy) {
    const index_t S = spec.n_states, A = spec.n_actions;
    p_pi = matrix_t<Scalar>::Zero(S, S);
    for (index_t s = 0; s < S; ++s)
      for (index_t a = 0; a < A; ++a)
        p_pi.row(s) += policy(s, a) * spec.transition_row(s, a);
    const matrix_t<Scalar> eye = matrix_t<Scalar>::Identity(S, S);
    value_lu.compute(eye - spec.gamma * p_pi);
    flow_lu.compute(eye - spec.gamma * p_pi.transpose());
  }

  vector_t<Scalar> values(const cmdp_spec<Scalar>& spec, const matrix_t<Scalar>& policy,
                          const matrix_t<Scalar>& g) const {
    return value_lu.solve((policy.array() * g.array()).rowwise().sum().matrix());
  }

  vector_t<Scalar> occupancy(const cmdp_spec<Scalar>& spec) const {
    vector_t<Scalar> d = flow_lu.solve(((Scalar(1) - spec.gamma) * spec.rho).eval());
    d /= d.sum();
    return d;
  }
};

// Exact policy evaluation by direct solve of the Bellman linear system.
template <typename Scalar>
oracle_report<Scalar> policy_evaluation(const cmdp_spec<Scalar>& spec,
                                        const matrix_t<Scalar>& policy,
                                        const utility_fn<Scalar>& g) {
  const index_t S = spec.n_states, A = spec.n_actions;
  const bellman_context<Scalar> ctx(spec, policy);
  oracle_report<Scalar> rep;
  rep.v = ctx.values(spec, policy, g.table);
  rep.q.resize(S, A);
  for (index_t s = 0; s < S; ++s)
    for (index_t a = 0; a < A; ++a)
      rep.q(s, a) = g(s, a) + spec.gamma * spec.transition_row(s, a).dot(rep.v);
  rep.adv = rep.q.colwise() - rep.v;
  rep.occupancy_d = ctx.occupancy(spec);
  rep.occupancy_nu = policy.array().colwise() * rep.occupancy_d.array();
  rep.j_value = spec.rho.dot(rep.v);
  return rep;
}

// Discounted-visitation entropy H(pi) = J_psi with psi = -log pi.
template <typename Scalar>
Scalar entropy(const cmdp_spec<Scalar>& spec, const matrix_t<Scalar>& policy) {
  for (index_t s = 0; s < spec.n_states; ++s)
    for (index_t a = 0; a < spec.n_actions; ++a)
      if (!(policy(s, a) > Scalar(0)))
        throw std::domain_error("entropy: zero-probability entry at (s=" + std::to_string(s) +
                                ", a=" + std::to_string(a) + ")");
  const matrix_t<Scalar> log_probs = policy.array().log();
  const bellman_context<Scalar> ctx(spec, policy);
  return spec.rho.dot(ctx.values(spec, policy, matrix_t<Scalar>(-log_probs)));
}

template <typename Scalar>
Scalar entropy(const cmdp_spec<Scalar>& spec, const policy_model<Scalar>& model,
               const vector_t<Scalar>& theta) {
  const matrix_t<Scalar> log_probs = model.log_prob_table(theta);
  const matrix_t<Scalar> policy = log_probs.array().exp();
  const bellman_context<Scalar> ctx(spec, policy);
  return spec.rho.dot(ctx.values(spec, policy, matrix_t<Scalar>(-log_probs)));
}

// L_tau(pi, lambda) = J_{r + lambda c} + tau * (H(pi) + lambda^2 / 2).
template <typename Scalar>
Scalar lagrangian(const cmdp_spec<Scalar>& spec, const matrix_t<Scalar>& policy, Scalar lambda,
                  Scalar tau) {
  const bellman_context<Scalar> ctx(spec, policy);
  const Scalar j = spec.rho.dot(ctx.values(spec, policy, matrix_t<Scalar>(spec.reward + lambda * spec.cost)));
  if (tau == Scalar(0)) return j;
  const matrix_t<Scalar> log_probs = policy.array().log();
  const Scalar h = spec.rho.dot(ctx.values(spec, policy, matrix_t<Scalar>(-log_probs)));
  return j + tau * (h + lambda * lambda / Scalar(2));
}

template <typename Scalar>
Scalar lagrangian(const cmdp_spec<Scalar>& spec, const policy_model<Scalar>& model,
                  const vector_t<Scalar>& theta, Scalar lambda, Scalar tau) {
  const matrix_t<Scalar> log_probs = model.log_prob_table(theta);
  const matrix_t<Scalar> policy = log_probs.array().exp();
  const bellman_context<Scalar> ctx(spec, policy);
  const Scalar j = spec.rho.dot(ctx.values(spec, policy, matrix_t<Scalar>(spec.reward + lambda * spec.cost)));
  if (tau == Scalar(0)) return j;
  const Scalar h = spec.rho.dot(ctx.values(spec, policy, matrix_t<Scalar>(-log_probs)));
  return j + tau * (h + lambda * lambda / Scalar(2));
}

// grad_theta L_tau = (1-gamma)^{-1} sum_{s,a} nu(s,a) A_g(s,a) score(s,a)
// with g = r + lambda c + tau psi_theta.
template <typename Scalar>
vector_t<Scalar> exact_lagrangian_gradient(const cmdp_spec<Scalar>& spec,
                                           const policy_model<Scalar>& model,
                                           const vector_t<Scalar>& theta, Scalar lambda,
                                           Scalar tau) {
  const matrix_t<Scalar> log_probs = model.log_prob_table(theta);
  const matrix_t<Scalar> policy = log_probs.array().exp();
  const auto rep =
      policy_evaluation(spec, policy, utility_fn<Scalar>::regularized(spec, lambda, tau, log_probs));
  vector_t<Scalar> grad = vector_t<Scalar>::Zero(model.dim());
  for (index_t s = 0; s < spec.n_states; ++s) {
    const vector_t<Scalar> probs = policy.row(s).transpose();
    for (index_t a = 0; a < spec.n_actions; ++a)
      grad.noalias() +=
          rep.occupancy_nu(s, a) * rep.adv(s, a) * model.score_given_probs(probs, s, a);
  }
  return grad / (Scalar(1) - spec.gamma);
}

// F(theta) = sum_s d(s) * fisher_at_state(s).
template <typename Scalar>
matrix_t<Scalar> exact_fisher(const cmdp_spec<Scalar>& spec, const policy_model<Scalar>& model,
                              const vector_t<Scalar>& theta) {
  const matrix_t<Scalar> policy = model.prob_table(theta);
  const bellman_context<Scalar> ctx(spec, policy);
  const vector_t<Scalar> d = ctx.occupancy(spec);
  matrix_t<Scalar> f = matrix_t<Scalar>::Zero(model.dim(), model.dim());
  for (index_t s = 0; s < spec.n_states; ++s)
    f.noalias() += d(s) * model.fisher_at_state_given_probs(policy.row(s).transpose(), s);
  return f;
}

// Solve F w = b. ridge > 0: (F + ridge I)^{-1} b; ridge == 0: minimum-norm
// pseudoinverse with eigenvalue cutoff 1e-10 * max eigenvalue.
template <typename Scalar>
vector_t<Scalar> fisher_solve(const matrix_t<Scalar>& fisher, const vector_t<Scalar>& b,
                              Scalar ridge) {
  const index_t d = fisher.rows();
  if (ridge > Scalar(0)) {
    matrix_t<Scalar> shifted = fisher;
    shifted.diagonal().array() += ridge;
    return shifted.ldlt().solve(b);
  }
  Eigen::SelfAdjointEigenSolver<matrix_t<Scalar>> eig(fisher);
  const vector_t<Scalar>& ev = eig.eigenvalues();
  const Scalar cutoff = Scalar(1e-10) * std::max(ev.cwiseAbs().maxCoeff(), Scalar(0));
  vector_t<Scalar> coeffs = eig.eigenvectors().transpose() * b;
  for (index_t i = 0; i < d; ++i) coeffs(i) = ev(i) > cutoff ? coeffs(i) / ev(i) : Scalar(0);
  return eig.eigenvectors() * coeffs;
}

// Natural policy gradient omega* = F(theta)^dagger grad L_tau.
template <typename Scalar>
vector_t<Scalar> exact_npg(const cmdp_spec<Scalar>& spec, const policy_model<Scalar>& model,
                           const vector_t<Scalar>& theta, Scalar lambda, Scalar tau,
                           Scalar ridge = Scalar(0)) {
  if (ridge < Scalar(0)) throw validation_error("ridge: must be nonnegative");
  return fisher_solve(exact_fisher(spec, model, theta),
                      exact_lagrangian_gradient(spec, model, theta, lambda, tau), ridge);
}

// Compatible-approximation error (one half the nu-weighted squared residual
// of omega . score against the scaled advantage of g = r + lambda c + tau psi).
template <typename Scalar>
Scalar compat_error(const cmdp_spec<Scalar>& spec, const policy_model<Scalar>& model,
                    const vector_t<Scalar>& theta, Scalar lambda, Scalar tau,
                    const matrix_t<Scalar>& nu, const vector_t<Scalar>& omega) {
  const matrix_t<Scalar> log_probs = model.log_prob_table(theta);
  const matrix_t<Scalar> policy = log_probs.array().exp();
  const auto rep =
      policy_evaluation(spec, policy, utility_fn<Scalar>::regularized(spec, lambda, tau, log_probs));
  const Scalar inv = Scalar(1) / (Scalar(1) - spec.gamma);
  Scalar total = 0;
  for (index_t s = 0; s < spec.n_states; ++s) {
    const vector_t<Scalar> probs = policy.row(s).transpose();
    for (index_t a = 0; a < spec.n_actions; ++a) {
      const Scalar resid =
          omega.dot(model.score_given_probs(probs, s, a)) - inv * rep.adv(s, a);
      total += nu(s, a) * resid * resid;
    }
  }
  return total / Scalar(2);
}

// Minimum of the compatible error under an arbitrary occupancy nu; at
// nu = nu^{pi*_tau} this is the transferred-error proxy (eps_bias / 2).
template <typename Scalar>
Scalar min_compat_error(const cmdp_spec<Scalar>& spec, const policy_model<Scalar>& model,
                        const vector_t<Scalar>& theta, Scalar lambda, Scalar tau,
                        const matrix_t<Scalar>& nu) {
  const matrix_t<Scalar> log_probs = model.log_prob_table(theta);
  const matrix_t<Scalar> policy = log_probs.array().exp();
  const auto rep =
      policy_evaluation(spec, policy, utility_fn<Scalar>::regularized(spec, lambda, tau, log_probs));
  const Scalar inv = Scalar(1) / (Scalar(1) - spec.gamma);
  matrix_t<Scalar> gram = matrix_t<Scalar>::Zero(model.dim(), model.dim());
  vector_t<Scalar> rhs = vector_t<Scalar>::Zero(model.dim());
  for (index_t s = 0; s < spec.n_states; ++s) {
    const vector_t<Scalar> probs = policy.row(s).transpose();
    for (index_t a = 0; a < spec.n_actions; ++a) {
      const vector_t<Scalar> sc = model.score_given_probs(probs, s, a);
      gram.noalias() += nu(s, a) * (sc * sc.transpose());
      rhs.noalias() += nu(s, a) * inv * rep.adv(s, a) * sc;
    }
  }
  const vector_t<Scalar> best = fisher_solve(gram, rhs, Scalar(0));
  return compat_error(spec, model, theta, lambda, tau, nu, best);
}

// L^2_{tau,lambda}: averaged-advantage bound.
template <typename Scalar>
Scalar advantage_bound_sq(Scalar lambda, Scalar tau, index_t n_actions, Scalar gamma) {
  const Scalar inv = Scalar(1) / (Scalar(1) - gamma);
  const Scalar log_a = std::log(static_cast<double>(n_actions));
  return Scalar(8) * (Scalar(1) + lambda) * (Scalar(1) + lambda) * inv * inv +
         tau * tau *
             (Scalar(32) * std::exp(-2.0) * static_cast<Scalar>(n_actions) +
              Scalar(12) * log_a * log_a * inv * inv);
}

// sigma^2_{tau,lambda}: scaled noise variance of the inner gradient estimator.
template <typename Scalar>
Scalar noise_variance_bound(Scalar lambda, Scalar tau, index_t n_actions, Scalar gamma, Scalar G,
                            Scalar mu_f) {
  const Scalar inv = Scalar(1) / (Scalar(1) - gamma);
  const Scalar inv2 = inv * inv;
  const Scalar g2 = G * G;
  return Scalar(48) * inv2 * inv2 *
             (Scalar(1) + lambda * lambda +
              Scalar(4) * static_cast<Scalar>(n_actions) * std::exp(-2.0) * tau * tau) +
         Scalar(2) * g2 * g2 * advantage_bound_sq(lambda, tau, n_actions, gamma) /
             (mu_f * mu_f) * inv2;
}

}  // namespace pdranpg
