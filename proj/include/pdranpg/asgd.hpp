#pragma once

#include <Eigen/Core>
#include <cmath>

#include "pdranpg/errors.hpp"
#include "pdranpg/oracle.hpp"
#include "pdranpg/sampler.hpp"

namespace pdranpg {

// Learning rates of the accelerated SGD inner loop. from_bounds instantiates
// the schedule alpha = 3√5 G²/(mu_F + 3√5 G²), beta = mu_F/(9G²),
// xi = 1/(3√5 G²), delta = 1/(5G²).
template <typename Scalar = double>
struct asgd_rates {
  Scalar alpha{}, beta{}, xi{}, delta{};
  index_t H = 0;  // even, >= 2; tail averages over (H/2, H]

  static asgd_rates from_bounds(Scalar g_sq, Scalar mu_f, index_t H) {
    if (!(g_sq > Scalar(0)) || !(mu_f > Scalar(0)))
      throw validation_error("asgd rates: G^2 and mu_F must be positive");
    const Scalar k = Scalar(3) * std::sqrt(Scalar(5)) * g_sq;
    asgd_rates r;
    r.alpha = k / (mu_f + k);
    r.beta = mu_f / (Scalar(9) * g_sq);
    r.xi = Scalar(1) / k;
    r.delta = Scalar(1) / (Scalar(5) * g_sq);
    r.H = H;
    r.validate();
    return r;
  }

  void validate() const {
    if (H < 2 || H % 2 != 0) throw validation_error("asgd rates: H must be even and >= 2");
    if (!(alpha > Scalar(0) && alpha < Scalar(1)))
      throw validation_error("asgd rates: alpha outside (0,1)");
    if (!(beta > Scalar(0) && beta < Scalar(1)))
      throw validation_error("asgd rates: beta outside (0,1)");
    if (!(xi > Scalar(0)) || !(delta > Scalar(0)))
      throw validation_error("asgd rates: xi and delta must be positive");
  }
};

template <typename Scalar = double>
struct asgd_state {
  vector_t<Scalar> x, v;
  index_t h = 0;

  static asgd_state zero(index_t dim) {
    return {vector_t<Scalar>::Zero(dim), vector_t<Scalar>::Zero(dim), 0};
  }
};

// Query point y_h = alpha x_h + (1 - alpha) v_h; the gradient is evaluated
// here, once per iteration, and reused by both the x and v updates.
template <typename Scalar>
vector_t<Scalar> asgd_query_point(const asgd_state<Scalar>& state, const asgd_rates<Scalar>& rates) {
  return rates.alpha * state.x + (Scalar(1) - rates.alpha) * state.v;
}

// One update with the gradient taken at the current y_h:
//   x' = y - delta g,  z = beta y + (1-beta) v,  v' = z - xi g.
template <typename Scalar>
void asgd_step(asgd_state<Scalar>& state, const asgd_rates<Scalar>& rates,
               const vector_t<Scalar>& grad) {
  const vector_t<Scalar> y = asgd_query_point(state, rates);
  state.x = y - rates.delta * grad;
  state.v = rates.beta * y + (Scalar(1) - rates.beta) * state.v - rates.xi * grad;
  state.h += 1;
}

enum class gradient_source { stochastic, exact_oracle };

template <typename Scalar = double>
struct inner_result {
  vector_t<Scalar> omega;
  long samples_used = 0;
};

// Inner loop: H accelerated steps from x_0 = v_0 = 0 with gradients of the
// compatible-approximation error at y_h, tail-averaged over h in (H/2, H].
// exact_oracle mode evaluates F(theta) w - grad L_tau once per iterate from
// the dynamic-programming oracle and is fully deterministic.
template <typename Scalar>
inner_result<Scalar> run_inner_loop(const cmdp_spec<Scalar>& spec, const policy_model<Scalar>& model,
                                    const vector_t<Scalar>& theta, Scalar lambda, Scalar tau,
                                    const asgd_rates<Scalar>& rates, gradient_source source,
                                    rng_stream rng) {
  rates.validate();
  const index_t d = model.dim();
  inner_result<Scalar> out;
  vector_t<Scalar> x = vector_t<Scalar>::Zero(d);
  vector_t<Scalar> v = vector_t<Scalar>::Zero(d);
  vector_t<Scalar> y(d), grad(d), tail = vector_t<Scalar>::Zero(d);
  const index_t tail_begin = rates.H / 2;  // x_h enters the average for h > H/2

  if (source == gradient_source::exact_oracle) {
    const matrix_t<Scalar> fisher = exact_fisher(spec, model, theta);
    const vector_t<Scalar> target = exact_lagrangian_gradient(spec, model, theta, lambda, tau);
    for (index_t h = 0; h < rates.H; ++h) {
      y.noalias() = rates.alpha * x + (Scalar(1) - rates.alpha) * v;
      grad.noalias() = fisher * y;
      grad.noalias() -= target;
      x.noalias() = y - rates.delta * grad;
      v.noalias() = rates.beta * y + (Scalar(1) - rates.beta) * v - rates.xi * grad;
      if (h + 1 > tail_begin) tail.noalias() += x;
    }
  } else {
    const policy_tables<Scalar> tables = make_policy_tables(model, theta);
    for (index_t h = 0; h < rates.H; ++h) {
      y.noalias() = rates.alpha * x + (Scalar(1) - rates.alpha) * v;
      const auto sample =
          estimate(spec, model, tables, y, lambda, tau, rng.child(static_cast<std::uint64_t>(h)));
      out.samples_used += sample.samples_used;
      x.noalias() = y - rates.delta * sample.grad_hat;
      v.noalias() = rates.beta * y + (Scalar(1) - rates.beta) * v - rates.xi * sample.grad_hat;
      if (h + 1 > tail_begin) tail.noalias() += x;
    }
  }
  out.omega = (Scalar(2) / static_cast<Scalar>(rates.H)) * tail;
  return out;
}

}  // namespace pdranpg
