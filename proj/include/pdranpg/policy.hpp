#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "pdranpg/cmdp.hpp"
#include "pdranpg/errors.hpp"
#include "pdranpg/rng.hpp"

namespace pdranpg {

enum class policy_kind { tabular_softmax, log_linear };

// Differentiable policy parameterization with analytic score functions.
//
// tabular_softmax: theta has one logit per (s,a), d = S*A; the complete class.
// log_linear: pi(a|s) ∝ exp(theta . phi(s,a)) for fixed feature vectors; the
// shipped incomplete class.
template <typename Scalar = double>
class policy_model {
 public:
  static policy_model tabular_softmax(index_t n_states, index_t n_actions) {
    policy_model m;
    m.kind_ = policy_kind::tabular_softmax;
    m.n_states_ = n_states;
    m.n_actions_ = n_actions;
    m.dim_ = n_states * n_actions;
    return m;
  }

  // features[s] is a d x A matrix whose column a holds phi(s,a).
  static policy_model log_linear(index_t n_states, index_t n_actions,
                                 std::vector<matrix_t<Scalar>> features) {
    if (static_cast<index_t>(features.size()) != n_states)
      throw validation_error("features: expected one block per state");
    policy_model m;
    m.kind_ = policy_kind::log_linear;
    m.n_states_ = n_states;
    m.n_actions_ = n_actions;
    m.dim_ = features.empty() ? 0 : features[0].rows();
    for (index_t s = 0; s < n_states; ++s) {
      if (features[s].rows() != m.dim_ || features[s].cols() != n_actions)
        throw validation_error("features[" + std::to_string(s) + "]: wrong shape");
      for (index_t a = 0; a < n_actions; ++a)
        m.feature_norm_bound_ = std::max(m.feature_norm_bound_, features[s].col(a).norm());
    }
    m.features_ = std::move(features);
    return m;
  }

  policy_kind kind() const { return kind_; }
  index_t n_states() const { return n_states_; }
  index_t n_actions() const { return n_actions_; }
  index_t dim() const { return dim_; }
  Scalar feature_norm_bound() const { return feature_norm_bound_; }

  // Per-state logits theta restricted to s (tabular) or phi(s,.)^T theta.
  vector_t<Scalar> logits(const vector_t<Scalar>& theta, index_t s) const {
    if (kind_ == policy_kind::tabular_softmax)
      return theta.segment(s * n_actions_, n_actions_);
    return features_[s].transpose() * theta;
  }

  // log pi(.|s) via max-shifted log-sum-exp.
  vector_t<Scalar> action_log_probs(const vector_t<Scalar>& theta, index_t s) const {
    vector_t<Scalar> z = logits(theta, s);
    const Scalar shift = z.maxCoeff();
    const Scalar lse = shift + std::log((z.array() - shift).exp().sum());
    return z.array() - lse;
  }

  matrix_t<Scalar> log_prob_table(const vector_t<Scalar>& theta) const {
    matrix_t<Scalar> table(n_states_, n_actions_);
    for (index_t s = 0; s < n_states_; ++s) table.row(s) = action_log_probs(theta, s).transpose();
    return table;
  }

  matrix_t<Scalar> prob_table(const vector_t<Scalar>& theta) const {
    return log_prob_table(theta).array().exp();
  }

  // grad_theta log pi(a|s). Tabular: indicator-minus-probabilities in the
  // state-s block; log-linear: phi(s,a) - E_{a'~pi}[phi(s,a')].
  vector_t<Scalar> score(const vector_t<Scalar>& theta, index_t s, index_t a) const {
    const vector_t<Scalar> probs = action_log_probs(theta, s).array().exp();
    return score_given_probs(probs, s, a);
  }

  vector_t<Scalar> score_given_probs(const vector_t<Scalar>& probs, index_t s, index_t a) const {
    vector_t<Scalar> out = vector_t<Scalar>::Zero(dim_);
    if (kind_ == policy_kind::tabular_softmax) {
      out.segment(s * n_actions_, n_actions_) = -probs;
      out(s * n_actions_ + a) += Scalar(1);
    } else {
      out = features_[s].col(a) - features_[s] * probs;
    }
    return out;
  }

  // E_{a~pi(s)}[score ⊗ score]; symmetric PSD by construction.
  matrix_t<Scalar> fisher_at_state(const vector_t<Scalar>& theta, index_t s) const {
    const vector_t<Scalar> probs = action_log_probs(theta, s).array().exp();
    return fisher_at_state_given_probs(probs, s);
  }

  matrix_t<Scalar> fisher_at_state_given_probs(const vector_t<Scalar>& probs, index_t s) const {
    matrix_t<Scalar> f = matrix_t<Scalar>::Zero(dim_, dim_);
    for (index_t a = 0; a < n_actions_; ++a) {
      const vector_t<Scalar> sc = score_given_probs(probs, s, a);
      f.noalias() += probs(a) * (sc * sc.transpose());
    }
    return f;
  }

 private:
  policy_kind kind_ = policy_kind::tabular_softmax;
  index_t n_states_ = 0;
  index_t n_actions_ = 0;
  index_t dim_ = 0;
  Scalar feature_norm_bound_ = 0;
  std::vector<matrix_t<Scalar>> features_;
};

// Empirical Assumption-2 constants with their argmax witnesses.
template <typename Scalar = double>
struct score_bounds {
  Scalar G = 0;  // max ||score||
  Scalar B = 0;  // max ||score difference|| / ||theta difference||
  index_t g_state = 0, g_action = 0;
  index_t b_state = 0, b_action = 0;
};

// Scans score norms over the supplied parameter samples and score Lipschitz
// ratios over sample pairs plus Gaussian perturbations at the given radius.
template <typename Scalar>
score_bounds<Scalar> measure_score_bounds(const policy_model<Scalar>& model,
                                          const std::vector<vector_t<Scalar>>& samples,
                                          rng_stream rng, Scalar perturb_radius = Scalar(0.1),
                                          int perturbations_per_sample = 4) {
  if (samples.empty()) throw validation_error("samples: measure_score_bounds needs at least one");
  score_bounds<Scalar> out;
  auto scan_norms = [&](const vector_t<Scalar>& theta) {
    for (index_t s = 0; s < model.n_states(); ++s) {
      const vector_t<Scalar> probs = model.action_log_probs(theta, s).array().exp();
      for (index_t a = 0; a < model.n_actions(); ++a) {
        const Scalar n = model.score_given_probs(probs, s, a).norm();
        if (n > out.G) {
          out.G = n;
          out.g_state = s;
          out.g_action = a;
        }
      }
    }
  };
  auto scan_pair = [&](const vector_t<Scalar>& t1, const vector_t<Scalar>& t2) {
    const Scalar dist = (t1 - t2).norm();
    if (dist <= Scalar(0)) return;
    for (index_t s = 0; s < model.n_states(); ++s) {
      const vector_t<Scalar> p1 = model.action_log_probs(t1, s).array().exp();
      const vector_t<Scalar> p2 = model.action_log_probs(t2, s).array().exp();
      for (index_t a = 0; a < model.n_actions(); ++a) {
        const Scalar ratio =
            (model.score_given_probs(p1, s, a) - model.score_given_probs(p2, s, a)).norm() / dist;
        if (ratio > out.B) {
          out.B = ratio;
          out.b_state = s;
          out.b_action = a;
        }
      }
    }
  };
  std::uint64_t stream_index = 0;
  for (const auto& theta : samples) {
    scan_norms(theta);
    for (int p = 0; p < perturbations_per_sample; ++p) {
      rng_stream sub = rng.child(stream_index++);
      vector_t<Scalar> perturbed = theta;
      for (index_t i = 0; i < perturbed.size(); ++i)
        perturbed(i) += perturb_radius * static_cast<Scalar>(sub.next_gaussian());
      scan_norms(perturbed);
      scan_pair(theta, perturbed);
    }
  }
  for (std::size_t i = 1; i < samples.size(); ++i) scan_pair(samples[i - 1], samples[i]);
  return out;
}

}  // namespace pdranpg
