#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "pdranpg/asgd.hpp"
#include "pdranpg/cmdp.hpp"
#include "pdranpg/errors.hpp"
#include "pdranpg/occupancy_lp.hpp"
#include "pdranpg/oracle.hpp"
#include "pdranpg/saddle.hpp"
#include "pdranpg/sampler.hpp"

namespace pdranpg {

// Inputs of the hyperparameter schedule: target accuracy, class expressivity
// error, Slater margin, and the measured Assumption-2 / Fisher constants.
// C_bar and C are the universal constants left unspecified by the analysis;
// overrides replace individual derived values verbatim.
template <typename Scalar = double>
struct schedule_config {
  Scalar epsilon{};
  Scalar epsilon_bias = 0;
  Scalar c_slat{};
  Scalar G{}, B{}, mu_F{};
  Scalar C_bar = 4, C = 1;
  struct overrides_t {
    std::optional<Scalar> tau, eta, lambda_max;
    std::optional<index_t> K, H;
  } overrides;
};

template <typename Scalar = double>
struct schedule {
  Scalar tau{}, eta{}, lambda_max{};
  index_t K = 0, H = 0;
  asgd_rates<Scalar> rates;
};

// tau = max{eps, eps_bias^(1/6)}, K = ceil(2 eps^-2 tau^-2), eta = eps^2 tau,
// H = ceil(40 G^2 mu_F^-1 log(tau^-1 eps^-2)) rounded up to even,
// lambda_max = 4 / ((1-gamma) c_slat). Requires eta*tau < 1.
template <typename Scalar>
schedule<Scalar> derive_schedule(const schedule_config<Scalar>& cfg, Scalar gamma) {
  if (!cfg.overrides.tau && !(cfg.epsilon > Scalar(0) && cfg.epsilon < Scalar(1)))
    throw schedule_error("schedule: epsilon must lie in (0,1)");
  if (cfg.epsilon_bias < Scalar(0) || cfg.epsilon_bias >= Scalar(1))
    throw schedule_error("schedule: epsilon_bias must lie in [0,1)");
  schedule<Scalar> s;
  s.tau = cfg.overrides.tau.value_or(
      std::max(cfg.epsilon, std::pow(cfg.epsilon_bias, Scalar(1) / Scalar(6))));
  s.eta = cfg.overrides.eta.value_or(cfg.epsilon * cfg.epsilon * s.tau);
  s.K = cfg.overrides.K.value_or(static_cast<index_t>(
      std::ceil(Scalar(2) / (cfg.epsilon * cfg.epsilon * s.tau * s.tau))));
  if (cfg.overrides.lambda_max) {
    s.lambda_max = *cfg.overrides.lambda_max;
  } else {
    if (!(cfg.c_slat > Scalar(0)))
      throw schedule_error("schedule: c_slat must be positive to derive lambda_max");
    s.lambda_max = Scalar(4) / ((Scalar(1) - gamma) * cfg.c_slat);
  }
  if (cfg.overrides.H) {
    s.H = *cfg.overrides.H;
  } else {
    if (!(cfg.G > Scalar(0)) || !(cfg.mu_F > Scalar(0)))
      throw schedule_error("schedule: measured G and mu_F must be positive to derive H");
    const Scalar raw = Scalar(40) * cfg.G * cfg.G / cfg.mu_F *
                       std::log(Scalar(1) / (s.tau * cfg.epsilon * cfg.epsilon));
    s.H = static_cast<index_t>(std::ceil(std::max(raw, Scalar(2))));
  }
  if (s.H % 2 != 0) s.H += 1;
  if (s.H < 2) s.H = 2;
  if (!(s.eta * s.tau < Scalar(1)))
    throw schedule_error("schedule: eta*tau >= 1 violates the recursion precondition");
  s.rates = asgd_rates<Scalar>::from_bounds(cfg.G * cfg.G, cfg.mu_F, s.H);
  return s;
}

template <typename Scalar = double>
struct dual_state {
  Scalar lambda = 0;
};

// lambda' = clip(lambda (1 - eta tau) - eta J_c_hat, 0, lambda_max).
template <typename Scalar>
dual_state<Scalar> dual_step(const dual_state<Scalar>& state, Scalar j_c_hat, Scalar eta,
                             Scalar tau, Scalar lambda_max) {
  const Scalar raw = state.lambda * (Scalar(1) - eta * tau) - eta * j_c_hat;
  return {std::min(std::max(raw, Scalar(0)), lambda_max)};
}

template <typename Scalar>
vector_t<Scalar> primal_step(const vector_t<Scalar>& theta, const vector_t<Scalar>& omega,
                             Scalar eta) {
  if (!omega.allFinite()) throw diverged_error("primal step: non-finite NPG direction");
  return theta + eta * omega;
}

template <typename Scalar = double>
struct run_record {
  index_t k = 0;
  Scalar optimality_gap{};
  Scalar violation{};
  Scalar phi_surrogate{};
  Scalar omega_norm{};
  Scalar lambda{};
  long samples_cumulative = 0;
};

enum class run_mode { stochastic, exact_gradients };

template <typename Scalar = double>
struct run_options {
  run_mode mode = run_mode::exact_gradients;
  bool instrumentation = true;
  index_t record_stride = 1;
  long sample_budget = -1;  // < 0: unlimited
  // Called once per outer iteration with (k, theta_k, lambda_k, omega_k).
  std::function<void(index_t, const vector_t<Scalar>&, Scalar, const vector_t<Scalar>&)> observer;
};

template <typename Scalar = double>
struct run_result {
  vector_t<Scalar> theta;
  dual_state<Scalar> dual;
  std::vector<run_record<Scalar>> records;
  long samples_total = 0;
  index_t iterations_run = 0;
  bool budget_truncated = false;
  Scalar min_fisher_eigenvalue_seen = std::numeric_limits<Scalar>::infinity();
};

// Full primal-dual loop: K outer iterations, each computing the NPG estimate
// omega_k by the inner loop at (theta_k, lambda_k), drawing J_c_hat(theta_k)
// (oracle J_c in exact mode), then theta_{k+1} = theta_k + eta omega_k and
// the projected dual step. Oracle metrics are attached to records at k = 0,
// every record_stride-th iteration, and k = K.
template <typename Scalar>
run_result<Scalar> run_pdr_anpg(const cmdp_spec<Scalar>& spec, const policy_model<Scalar>& model,
                                const schedule<Scalar>& sched, const run_options<Scalar>& opts,
                                rng_stream rng) {
  run_result<Scalar> out;
  out.theta = vector_t<Scalar>::Zero(model.dim());
  out.dual.lambda = 0;
  if (sched.K == 0) return out;

  struct oracle_metrics {
    Scalar j_r_star{};
    saddle_point<Scalar> saddle;
    matrix_t<Scalar> log_pi_star;
  };
  std::optional<oracle_metrics> metrics;
  if (opts.instrumentation) {
    oracle_metrics m;
    m.j_r_star = solve_constrained_optimum(spec).j_r;
    m.saddle = solve_regularized_saddle(spec, sched.tau, sched.lambda_max);
    m.log_pi_star = m.saddle.pi_star_tau.array().log();
    metrics = std::move(m);
  }

  auto emit_record = [&](index_t k, Scalar omega_norm) {
    run_record<Scalar> rec;
    rec.k = k;
    rec.omega_norm = omega_norm;
    rec.lambda = out.dual.lambda;
    rec.samples_cumulative = out.samples_total;
    if (metrics) {
      const matrix_t<Scalar> log_probs = model.log_prob_table(out.theta);
      const matrix_t<Scalar> probs = log_probs.array().exp();
      rec.optimality_gap = metrics->j_r_star - policy_value(spec, probs, spec.reward);
      rec.violation = std::max(Scalar(0), -policy_value(spec, probs, spec.cost));
      const auto& sp = metrics->saddle;
      const bellman_context<Scalar> star_ctx(spec, sp.pi_star_tau);
      const vector_t<Scalar> d_star = star_ctx.occupancy(spec);
      Scalar kl = 0;
      for (index_t s = 0; s < spec.n_states; ++s)
        for (index_t a = 0; a < spec.n_actions; ++a)
          kl += d_star(s) * sp.pi_star_tau(s, a) *
                (metrics->log_pi_star(s, a) - log_probs(s, a));
      const Scalar dual_gap = sp.lambda_star_tau - out.dual.lambda;
      rec.phi_surrogate = kl + dual_gap * dual_gap / Scalar(2);
    } else {
      rec.optimality_gap = rec.violation = rec.phi_surrogate =
          std::numeric_limits<Scalar>::quiet_NaN();
    }
    out.records.push_back(rec);
  };

  emit_record(0, Scalar(0));
  for (index_t k = 0; k < sched.K; ++k) {
    const rng_stream iter_rng = rng.child(static_cast<std::uint64_t>(k));
    const gradient_source source = opts.mode == run_mode::exact_gradients
                                       ? gradient_source::exact_oracle
                                       : gradient_source::stochastic;
    const auto inner = run_inner_loop(spec, model, out.theta, out.dual.lambda, sched.tau,
                                      sched.rates, source, iter_rng.child(0));
    out.samples_total += inner.samples_used;

    Scalar j_c_hat;
    if (opts.mode == run_mode::exact_gradients) {
      j_c_hat = policy_value(spec, matrix_t<Scalar>(model.prob_table(out.theta)), spec.cost);
    } else {
      const auto draw = estimate_jc_only(spec, model, out.theta, iter_rng.child(1));
      j_c_hat = draw.first;
      out.samples_total += draw.second;
    }

    if (opts.observer) opts.observer(k, out.theta, out.dual.lambda, inner.omega);
    if (opts.instrumentation) {
      Eigen::SelfAdjointEigenSolver<matrix_t<Scalar>> eig(exact_fisher(spec, model, out.theta));
      out.min_fisher_eigenvalue_seen =
          std::min(out.min_fisher_eigenvalue_seen, eig.eigenvalues().minCoeff());
    }

    const Scalar omega_norm = inner.omega.norm();
    out.theta = primal_step(out.theta, inner.omega, sched.eta);
    out.dual = dual_step(out.dual, j_c_hat, sched.eta, sched.tau, sched.lambda_max);
    out.iterations_run = k + 1;

    const bool budget_hit = opts.sample_budget >= 0 && out.samples_total >= opts.sample_budget;
    const bool last = k + 1 == sched.K || budget_hit;
    if ((k + 1) % opts.record_stride == 0 || last) emit_record(k + 1, omega_norm);
    if (budget_hit) {
      out.budget_truncated = true;
      break;
    }
  }
  return out;
}

// Conservative-constraint transform: c' = c - (1-gamma) delta', shifting
// J_c by exactly -delta' for every policy.
template <typename Scalar>
cmdp_spec<Scalar> conservative_transform(const cmdp_spec<Scalar>& spec, Scalar delta_prime) {
  if (delta_prime < Scalar(0)) throw validation_error("delta': must be nonnegative");
  cmdp_spec<Scalar> out = spec;
  const Scalar shift = (Scalar(1) - spec.gamma) * delta_prime;
  out.cost.array() -= shift;
  for (index_t s = 0; s < spec.n_states; ++s)
    for (index_t a = 0; a < spec.n_actions; ++a)
      if (out.cost(s, a) < Scalar(-1))
        throw validation_error("cost[" + std::to_string(s) + "][" + std::to_string(a) +
                               "]: conservative shift leaves range [-1,1]");
  return out;
}

}  // namespace pdranpg
