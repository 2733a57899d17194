#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "pdranpg/cmdp.hpp"
#include "pdranpg/occupancy_lp.hpp"
#include "pdranpg/oracle.hpp"
#include "pdranpg/policy.hpp"
#include "pdranpg/saddle.hpp"
#include "pdranpg/sampler.hpp"

namespace pdranpg {

// One verification outcome: pass/fail, the worst slack observed (negative
// slack means a violation), and a human-readable detail line.
struct check_result {
  std::string name;
  bool pass = false;
  double margin = 0;
  std::string detail;
};

namespace checks {

inline vector_t<double> random_theta(index_t dim, double scale, rng_stream& rng) {
  vector_t<double> theta(dim);
  for (index_t i = 0; i < dim; ++i) theta(i) = scale * rng.next_gaussian();
  return theta;
}

inline matrix_t<double> random_policy_table(index_t S, index_t A, double scale, rng_stream& rng) {
  matrix_t<double> pi(S, A);
  for (index_t s = 0; s < S; ++s) {
    vector_t<double> logits(A);
    for (index_t a = 0; a < A; ++a) logits(a) = scale * rng.next_gaussian();
    const double shift = logits.maxCoeff();
    pi.row(s) = (logits.array() - shift).exp();
    pi.row(s) /= pi.row(s).sum();
  }
  return pi;
}

// Score-norm bound sqrt(2) holds for any tabular softmax policy; log-linear
// scores are centered feature combinations bounded by twice the feature norm.
inline double class_score_bound(const policy_model<double>& model) {
  return model.kind() == policy_kind::tabular_softmax ? std::sqrt(2.0)
                                                      : 2.0 * model.feature_norm_bound();
}

// Averaged-advantage bound: E_{a~pi(s)} |A_g(s,a)|^2 <= L^2_{tau,lambda}.
inline check_result lemma2_advantage_bound(const cmdp_spec<double>& spec,
                                           const policy_model<double>& model, int n_probes,
                                           double lambda_max, rng_stream rng,
                                           bool force_zero_tau_lambda = false) {
  check_result res{force_zero_tau_lambda ? "lemma2_advantage_bound_tau0" : "lemma2_advantage_bound"};
  double worst = std::numeric_limits<double>::infinity();
  for (int p = 0; p < n_probes; ++p) {
    rng_stream sub = rng.child(p);
    const auto theta = random_theta(model.dim(), 1.5, sub);
    const double lambda = force_zero_tau_lambda ? 0.0 : lambda_max * sub.next_double();
    const double tau = force_zero_tau_lambda ? 0.0 : sub.next_double();
    const index_t s =
        static_cast<index_t>(sub.next_double() * static_cast<double>(spec.n_states));
    const matrix_t<double> log_probs = model.log_prob_table(theta);
    const matrix_t<double> policy = log_probs.array().exp();
    const auto rep = policy_evaluation(
        spec, policy, utility_fn<double>::regularized(spec, lambda, tau, log_probs));
    double avg = 0;
    for (index_t a = 0; a < spec.n_actions; ++a)
      avg += policy(s, a) * rep.adv(s, a) * rep.adv(s, a);
    const double bound = advantage_bound_sq(lambda, tau, spec.n_actions, spec.gamma);
    worst = std::min(worst, bound + 1e-10 - avg);
  }
  res.margin = worst;
  res.pass = worst >= 0;
  std::ostringstream d;
  d << n_probes << " probes, min slack " << worst;
  res.detail = d.str();
  return res;
}

// Gradient-norm bound: ||grad L_tau||^2 <= (1-gamma)^{-2} G^2 L^2_{tau,lambda}.
inline check_result lemma5_gradient_bound(const cmdp_spec<double>& spec,
                                          const policy_model<double>& model, int n_probes,
                                          double lambda_max, rng_stream rng) {
  check_result res{"lemma5_gradient_norm_bound"};
  const double g_cls = class_score_bound(model);
  const double inv = 1.0 / (1.0 - spec.gamma);
  double worst = std::numeric_limits<double>::infinity();
  for (int p = 0; p < n_probes; ++p) {
    rng_stream sub = rng.child(p);
    const auto theta = random_theta(model.dim(), 1.5, sub);
    const double lambda = lambda_max * sub.next_double();
    const double tau = sub.next_double();
    const double sq = exact_lagrangian_gradient(spec, model, theta, lambda, tau).squaredNorm();
    const double bound =
        inv * inv * g_cls * g_cls * advantage_bound_sq(lambda, tau, spec.n_actions, spec.gamma);
    worst = std::min(worst, bound + 1e-10 - sq);
  }
  res.margin = worst;
  res.pass = worst >= 0;
  std::ostringstream d;
  d << n_probes << " probes with class G=" << g_cls << ", min slack " << worst;
  res.detail = d.str();
  return res;
}

// Identity grad_w E = F(theta) w - H_tau/(1-gamma), finite-differenced in w.
inline check_result eq14_gradient_identity(const cmdp_spec<double>& spec,
                                           const policy_model<double>& model, int n_probes,
                                           double lambda_max, rng_stream rng,
                                           double tol = 1e-8) {
  check_result res{"eq14_error_gradient_identity"};
  double worst = 0;
  const double h = 1e-4;
  for (int p = 0; p < n_probes; ++p) {
    rng_stream sub = rng.child(p);
    const auto theta = random_theta(model.dim(), 1.2, sub);
    const double lambda = lambda_max * sub.next_double();
    const double tau = sub.next_double();
    auto omega = random_theta(model.dim(), 2.0, sub);
    const matrix_t<double> policy = model.prob_table(theta);
    const bellman_context<double> ctx(spec, policy);
    const vector_t<double> d = ctx.occupancy(spec);
    const matrix_t<double> nu = policy.array().colwise() * d.array();
    const matrix_t<double> fisher = exact_fisher(spec, model, theta);
    const vector_t<double> target = exact_lagrangian_gradient(spec, model, theta, lambda, tau);
    const vector_t<double> analytic = fisher * omega - target;
    for (index_t i = 0; i < model.dim(); ++i) {
      vector_t<double> hi = omega, lo = omega;
      hi(i) += h;
      lo(i) -= h;
      const double fd = (compat_error(spec, model, theta, lambda, tau, nu, hi) -
                         compat_error(spec, model, theta, lambda, tau, nu, lo)) /
                        (2 * h);
      worst = std::max(worst, std::abs(fd - analytic(i)));
    }
  }
  res.margin = tol - worst;
  res.pass = worst <= tol;
  std::ostringstream d;
  d << n_probes << " probes, max |fd - analytic| = " << worst;
  res.detail = d.str();
  return res;
}

// Policy-gradient identity: central differences of L_tau(theta) against the
// oracle gradient, including the theta-dependent entropy utility.
inline check_result lemma1_gradient_fd(const cmdp_spec<double>& spec,
                                       const policy_model<double>& model, int n_probes,
                                       double lambda_max, rng_stream rng, bool with_tau,
                                       double tol = 1e-6) {
  check_result res{with_tau ? "lemma1_policy_gradient_regularized" : "lemma1_policy_gradient"};
  double worst = 0;
  const double h = 1e-5;
  for (int p = 0; p < n_probes; ++p) {
    rng_stream sub = rng.child(p);
    const auto theta = random_theta(model.dim(), 1.2, sub);
    const double lambda = lambda_max * sub.next_double();
    const double tau = with_tau ? 0.1 + 0.9 * sub.next_double() : 0.0;
    const vector_t<double> analytic = exact_lagrangian_gradient(spec, model, theta, lambda, tau);
    for (index_t i = 0; i < model.dim(); ++i) {
      vector_t<double> hi = theta, lo = theta;
      hi(i) += h;
      lo(i) -= h;
      const double fd =
          (lagrangian(spec, model, hi, lambda, tau) - lagrangian(spec, model, lo, lambda, tau)) /
          (2 * h);
      worst = std::max(worst, std::abs(fd - analytic(i)));
    }
  }
  res.margin = tol - worst;
  res.pass = worst <= tol;
  std::ostringstream d;
  d << n_probes << " probes, max |fd - analytic| = " << worst;
  res.detail = d.str();
  return res;
}

// Performance-difference identity for random policy pairs.
inline check_result lemma13_performance_difference(const cmdp_spec<double>& spec, int n_pairs,
                                                   rng_stream rng, double tol = 1e-9) {
  check_result res{"lemma13_performance_difference"};
  double worst = 0;
  for (int p = 0; p < n_pairs; ++p) {
    rng_stream sub = rng.child(p);
    const auto pi1 = random_policy_table(spec.n_states, spec.n_actions, 1.5, sub);
    const auto pi2 = random_policy_table(spec.n_states, spec.n_actions, 1.5, sub);
    matrix_t<double> g(spec.n_states, spec.n_actions);
    for (index_t s = 0; s < spec.n_states; ++s)
      for (index_t a = 0; a < spec.n_actions; ++a) g(s, a) = 2.0 * sub.next_double() - 1.0;
    const utility_fn<double> util{g};
    const auto rep1 = policy_evaluation(spec, pi1, util);
    const auto rep2 = policy_evaluation(spec, pi2, util);
    const double lhs = rep1.j_value - rep2.j_value;
    double rhs = 0;
    for (index_t s = 0; s < spec.n_states; ++s)
      for (index_t a = 0; a < spec.n_actions; ++a)
        rhs += rep1.occupancy_nu(s, a) * rep2.adv(s, a);
    rhs /= (1.0 - spec.gamma);
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  res.margin = tol - worst;
  res.pass = worst <= tol;
  std::ostringstream d;
  d << n_pairs << " pairs, max |identity residual| = " << worst;
  res.detail = d.str();
  return res;
}

// Regularized strong-duality sandwich at (pi*_tau, lambda*_tau):
// J^pi_{r+lambda* c} - tau H(pi*) <= J^{pi*}_{r+lambda* c} <= J^{pi*}_{r+lambda c} + tau lambda^2/2.
inline check_result lemma14_saddle_sandwich(const cmdp_spec<double>& spec, double tau,
                                            double lambda_max, int n_probes, rng_stream rng,
                                            double tol = 1e-8) {
  check_result res{"lemma14_saddle_sandwich"};
  const auto sp = solve_regularized_saddle(spec, tau, lambda_max);
  const double jr_star = policy_value(spec, sp.pi_star_tau, spec.reward);
  const double jc_star = policy_value(spec, sp.pi_star_tau, spec.cost);
  const double mid = jr_star + sp.lambda_star_tau * jc_star;
  const double h_star = entropy(spec, sp.pi_star_tau);
  double worst = std::numeric_limits<double>::infinity();
  for (int p = 0; p < n_probes; ++p) {
    rng_stream sub = rng.child(p);
    const auto pi = random_policy_table(spec.n_states, spec.n_actions, 1.5, sub);
    const double lambda = lambda_max * sub.next_double();
    const double lhs =
        policy_value(spec, pi, matrix_t<double>(spec.reward + sp.lambda_star_tau * spec.cost));
    worst = std::min(worst, mid - (lhs - tau * h_star));
    const double rhs = jr_star + lambda * jc_star + tau * lambda * lambda / 2;
    worst = std::min(worst, rhs - mid);
  }
  res.margin = worst;
  res.pass = worst >= -tol;
  std::ostringstream d;
  d << n_probes << " probes, min slack " << worst << " (primal residual " << sp.primal_residual
    << ", dual residual " << sp.dual_residual << ")";
  res.detail = d.str();
  return res;
}

// Estimator unbiasedness: the empirical means of J_c_hat and of the gradient
// estimate stay within z_tol standard errors of the oracle values.
inline check_result lemma4_unbiasedness(const cmdp_spec<double>& spec,
                                        const policy_model<double>& model, int n_tuples,
                                        long n_draws, double lambda_max, rng_stream rng,
                                        double z_tol = 4.0) {
  check_result res{"lemma4_unbiasedness"};
  double worst_z = 0;
  for (int t = 0; t < n_tuples; ++t) {
    rng_stream sub = rng.child(t);
    const auto theta = random_theta(model.dim(), 1.0, sub);
    const double lambda = lambda_max * sub.next_double();
    const double tau = sub.next_double();
    const auto omega = random_theta(model.dim(), 2.0, sub);

    const matrix_t<double> policy = model.prob_table(theta);
    const double jc_true = policy_value(spec, policy, spec.cost);
    const vector_t<double> grad_true =
        exact_fisher(spec, model, theta) * omega -
        exact_lagrangian_gradient(spec, model, theta, lambda, tau);

    const auto tables = make_policy_tables(model, theta);
    const index_t d = model.dim();
    double jc_sum = 0, jc_sq = 0;
    vector_t<double> g_sum = vector_t<double>::Zero(d), g_sq = vector_t<double>::Zero(d);
    rng_stream draws = sub.child(1000);
    for (long i = 0; i < n_draws; ++i) {
      const auto s = estimate(spec, model, tables, omega, lambda, tau, draws.child(i));
      jc_sum += s.j_c_hat;
      jc_sq += s.j_c_hat * s.j_c_hat;
      g_sum += s.grad_hat;
      g_sq.array() += s.grad_hat.array().square();
    }
    const double n = static_cast<double>(n_draws);
    const double jc_mean = jc_sum / n;
    const double jc_se = std::sqrt(std::max(jc_sq / n - jc_mean * jc_mean, 1e-300) / n);
    worst_z = std::max(worst_z, std::abs(jc_mean - jc_true) / std::max(jc_se, 1e-12));
    for (index_t i = 0; i < d; ++i) {
      const double mean = g_sum(i) / n;
      const double se = std::sqrt(std::max(g_sq(i) / n - mean * mean, 1e-300) / n);
      worst_z = std::max(worst_z, std::abs(mean - grad_true(i)) / std::max(se, 1e-12));
    }
  }
  res.margin = z_tol - worst_z;
  res.pass = worst_z <= z_tol;
  std::ostringstream d;
  d << n_tuples << " tuples x " << n_draws << " draws, worst |z| = " << worst_z;
  res.detail = d.str();
  return res;
}

// Variance dominance at omega = omega*: the empirical second-moment matrix of
// the gradient estimate is dominated by sigma^2 F(theta) up to the sampling
// radius (z_tol standard errors in Frobenius norm).
inline check_result lemma6_variance_dominance(const cmdp_spec<double>& spec,
                                              const policy_model<double>& model, int n_probes,
                                              long n_draws, double lambda_max, double g_measured,
                                              double mu_f, rng_stream rng, double z_tol = 4.0) {
  check_result res{"lemma6_variance_dominance"};
  double worst = std::numeric_limits<double>::infinity();
  const index_t d = model.dim();
  for (int t = 0; t < n_probes; ++t) {
    rng_stream sub = rng.child(t);
    const auto theta = random_theta(model.dim(), 1.0, sub);
    const double lambda = lambda_max * sub.next_double();
    const double tau = sub.next_double();
    const vector_t<double> omega_star = exact_npg(spec, model, theta, lambda, tau, 0.0);
    const matrix_t<double> fisher = exact_fisher(spec, model, theta);
    const double sigma_sq =
        noise_variance_bound(lambda, tau, spec.n_actions, spec.gamma, g_measured, mu_f);

    const auto tables = make_policy_tables(model, theta);
    matrix_t<double> moment = matrix_t<double>::Zero(d, d);
    matrix_t<double> moment_sq = matrix_t<double>::Zero(d, d);
    rng_stream draws = sub.child(1000);
    for (long i = 0; i < n_draws; ++i) {
      const auto s = estimate(spec, model, tables, omega_star, lambda, tau, draws.child(i));
      const matrix_t<double> outer = s.grad_hat * s.grad_hat.transpose();
      moment += outer;
      moment_sq.array() += outer.array().square();
    }
    const double n = static_cast<double>(n_draws);
    moment /= n;
    const matrix_t<double> var = (moment_sq / n - moment.array().square().matrix()).cwiseMax(0.0);
    const double frobenius_se = std::sqrt(var.sum() / n);
    Eigen::SelfAdjointEigenSolver<matrix_t<double>> eig(sigma_sq * fisher - moment);
    const double eigmin = eig.eigenvalues().minCoeff();
    worst = std::min(worst, eigmin + z_tol * frobenius_se);
  }
  res.margin = worst;
  res.pass = worst >= 0;
  std::ostringstream d2;
  d2 << n_probes << " probes x " << n_draws << " draws, min (eigmin + radius) = " << worst;
  res.detail = d2.str();
  return res;
}

// Mean environment interactions per estimator call: (A+2)/(1-gamma) within rel_tol.
inline check_result sampler_cost_audit(const cmdp_spec<double>& spec,
                                       const policy_model<double>& model, long n_calls,
                                       rng_stream rng, double rel_tol = 0.02) {
  check_result res{"sampler_cost_audit"};
  const auto theta = random_theta(model.dim(), 0.5, rng);
  const auto tables = make_policy_tables(model, theta);
  const vector_t<double> omega = vector_t<double>::Zero(model.dim());
  long total = 0;
  for (long i = 0; i < n_calls; ++i)
    total += estimate(spec, model, tables, omega, 0.5, 0.5, rng.child(i)).samples_used;
  const double mean = static_cast<double>(total) / static_cast<double>(n_calls);
  const double expected =
      static_cast<double>(spec.n_actions + 2) / (1.0 - static_cast<double>(spec.gamma));
  const double rel = std::abs(mean - expected) / expected;
  res.margin = rel_tol - rel;
  res.pass = rel <= rel_tol;
  std::ostringstream d;
  d << "mean " << mean << " vs (A+2)/(1-gamma) = " << expected << ", rel err " << rel;
  res.detail = d.str();
  return res;
}

// Unregularized dual bound: the LP multiplier obeys lambda* <= 1/((1-gamma) c_slat).
inline check_result strong_duality_dual_bound(const cmdp_spec<double>& spec, double c_slat) {
  check_result res{"strong_duality_dual_bound"};
  const auto sol = solve_constrained_optimum(spec);
  const double bound = 1.0 / ((1.0 - spec.gamma) * c_slat);
  res.margin = bound + 1e-9 - sol.lambda_star;
  res.pass = res.margin >= 0;
  std::ostringstream d;
  d << "lambda* = " << sol.lambda_star << " vs bound " << bound << " (c_slat " << c_slat << ")";
  res.detail = d.str();
  return res;
}

}  // namespace checks
}  // namespace pdranpg
