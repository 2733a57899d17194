#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pdranpg/oracle.hpp"
#include "pdranpg/policy.hpp"
#include "test_util.hpp"

using namespace pdranpg;

namespace {

vector_t<double> gaussian_vector(index_t n, double scale, rng_stream& rng) {
  vector_t<double> v(n);
  for (index_t i = 0; i < n; ++i) v(i) = scale * rng.next_gaussian();
  return v;
}

}  // namespace

TEST_CASE("tabular softmax log probabilities") {
  const auto model = policy_model<double>::tabular_softmax(2, 4);

  SUBCASE("zero logits are uniform") {
    const vector_t<double> theta = vector_t<double>::Zero(8);
    const auto lp = model.action_log_probs(theta, 1);
    for (index_t a = 0; a < 4; ++a) CHECK(lp(a) == doctest::Approx(std::log(0.25)).epsilon(1e-12));
  }
  SUBCASE("equal logits split evenly") {
    const auto two = policy_model<double>::tabular_softmax(1, 2);
    vector_t<double> theta(2);
    theta << 1.0, 1.0;
    const auto lp = two.action_log_probs(theta, 0);
    CHECK(lp(0) == doctest::Approx(std::log(0.5)));
    CHECK(lp(1) == doctest::Approx(std::log(0.5)));
  }
  SUBCASE("logits (0, ln 3) give probabilities (1/4, 3/4)") {
    const auto two = policy_model<double>::tabular_softmax(1, 2);
    vector_t<double> theta(2);
    theta << 0.0, std::log(3.0);
    const auto lp = two.action_log_probs(theta, 0);
    CHECK(lp(0) == doctest::Approx(std::log(0.25)).epsilon(1e-12));
    CHECK(lp(1) == doctest::Approx(std::log(0.75)).epsilon(1e-12));
  }
}

TEST_CASE("probabilities normalize to one for random parameters") {
  const auto model = policy_model<double>::tabular_softmax(3, 5);
  rng_stream rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const auto theta = gaussian_vector(model.dim(), 30.0, rng);
    for (index_t s = 0; s < 3; ++s) {
      const double total = model.action_log_probs(theta, s).array().exp().sum();
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("tabular score identity and centering") {
  const auto model = policy_model<double>::tabular_softmax(2, 2);
  const vector_t<double> theta = vector_t<double>::Zero(4);

  SUBCASE("uniform two-action score block") {
    const auto sc = model.score(theta, 0, 0);
    CHECK(sc(0) == doctest::Approx(0.5));
    CHECK(sc(1) == doctest::Approx(-0.5));
    CHECK(sc(2) == 0.0);
    CHECK(sc(3) == 0.0);
  }
  SUBCASE("scores are centered under the policy") {
    rng_stream rng(3);
    const auto t = gaussian_vector(4, 2.0, rng);
    for (index_t s = 0; s < 2; ++s) {
      const vector_t<double> probs = model.action_log_probs(t, s).array().exp();
      vector_t<double> mean = vector_t<double>::Zero(4);
      for (index_t a = 0; a < 2; ++a) mean += probs(a) * model.score(t, s, a);
      CHECK(mean.cwiseAbs().maxCoeff() < 1e-14);
    }
  }
}

TEST_CASE("score matches central finite differences of log probabilities") {
  const auto doc = testutil::load("twostate_greedy_violates.json");
  const auto tabular = policy_model<double>::tabular_softmax(2, 2);
  const auto loglin = policy_model<double>::log_linear(2, 2, *doc.features);
  const double h = 1e-5;
  rng_stream rng(41);
  for (const auto* model : {&tabular, &loglin}) {
    for (int trial = 0; trial < 100; ++trial) {
      rng_stream sub = rng.child(trial + (model == &loglin ? 1000 : 0));
      const auto theta = gaussian_vector(model->dim(), 1.5, sub);
      const index_t s = static_cast<index_t>(sub.next_double() * 2);
      const index_t a = static_cast<index_t>(sub.next_double() * 2);
      const auto analytic = model->score(theta, s, a);
      for (index_t i = 0; i < model->dim(); ++i) {
        vector_t<double> hi = theta, lo = theta;
        hi(i) += h;
        lo(i) -= h;
        const double fd =
            (model->action_log_probs(hi, s)(a) - model->action_log_probs(lo, s)(a)) / (2 * h);
        CHECK(std::abs(fd - analytic(i)) < 1e-6);
      }
    }
  }
}

TEST_CASE("per-state Fisher blocks") {
  SUBCASE("uniform single state") {
    const auto model = policy_model<double>::tabular_softmax(1, 2);
    const vector_t<double> theta = vector_t<double>::Zero(2);
    const auto f = model.fisher_at_state(theta, 0);
    CHECK(f(0, 0) == doctest::Approx(0.25));
    CHECK(f(0, 1) == doctest::Approx(-0.25));
    CHECK(f(1, 0) == doctest::Approx(-0.25));
    CHECK(f(1, 1) == doctest::Approx(0.25));
  }
  SUBCASE("positive semidefinite at random parameters") {
    const auto model = policy_model<double>::tabular_softmax(2, 3);
    rng_stream rng(9);
    for (int trial = 0; trial < 50; ++trial) {
      const auto theta = gaussian_vector(model.dim(), 3.0, rng);
      for (index_t s = 0; s < 2; ++s) {
        Eigen::SelfAdjointEigenSolver<matrix_t<double>> eig(model.fisher_at_state(theta, s));
        CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
      }
    }
  }
  SUBCASE("deterministic limit kills the block") {
    const auto model = policy_model<double>::tabular_softmax(1, 2);
    vector_t<double> theta(2);
    theta << 30.0, 0.0;
    CHECK(model.fisher_at_state(theta, 0).norm() < 1e-10);
  }
}

TEST_CASE("fisher_at_state equals the Monte-Carlo second moment of the score") {
  const auto model = policy_model<double>::tabular_softmax(1, 3);
  rng_stream rng(123);
  const auto theta = gaussian_vector(3, 1.0, rng);
  const vector_t<double> probs = model.action_log_probs(theta, 0).array().exp();
  const auto exact = model.fisher_at_state(theta, 0);

  matrix_t<double> mc = matrix_t<double>::Zero(3, 3);
  const long n = 1000000;
  for (long i = 0; i < n; ++i) {
    const index_t a = sample_categorical(probs, rng);
    const auto sc = model.score_given_probs(probs, 0, a);
    mc.noalias() += sc * sc.transpose();
  }
  mc /= static_cast<double>(n);
  CHECK((mc - exact).norm() < 0.01);
}

TEST_CASE("measured score bounds") {
  const auto model = policy_model<double>::tabular_softmax(2, 2);
  rng_stream rng(55);
  std::vector<vector_t<double>> samples;
  for (int i = 0; i < 20; ++i) samples.push_back(gaussian_vector(4, 3.0, rng));

  SUBCASE("tabular G never exceeds sqrt(2)") {
    const auto bounds = measure_score_bounds(model, samples, rng.child(1));
    CHECK(bounds.G <= std::sqrt(2.0) + 1e-9);
    CHECK(bounds.G > 0.5);
    CHECK(bounds.B > 0.0);
    CHECK(bounds.B <= 2.0);
  }
  SUBCASE("a single sample still yields B from perturbed pairs") {
    const auto bounds =
        measure_score_bounds(model, {vector_t<double>::Zero(4)}, rng.child(2), 0.1);
    CHECK(bounds.B > 0.0);
  }
  SUBCASE("empty sample list is rejected") {
    CHECK_THROWS_AS(measure_score_bounds(model, {}, rng.child(3)), validation_error);
  }
  SUBCASE("log-linear with identical features has zero score") {
    std::vector<matrix_t<double>> feats(1, matrix_t<double>::Ones(3, 2));
    const auto constant = policy_model<double>::log_linear(1, 2, std::move(feats));
    const auto bounds =
        measure_score_bounds(constant, {gaussian_vector(3, 1.0, rng)}, rng.child(4));
    CHECK(bounds.G == doctest::Approx(0.0));
  }
}

TEST_CASE("discounted entropy never exceeds log(A)/(1-gamma)") {
  const auto m = testutil::load("threestate_random.json").spec;
  const auto model = policy_model<double>::tabular_softmax(3, 2);
  rng_stream rng(66);
  const double bound = std::log(2.0) / (1.0 - m.gamma);
  for (int trial = 0; trial < 50; ++trial) {
    const auto theta = gaussian_vector(model.dim(), 2.0, rng);
    const double h = entropy(m, model, theta);
    CHECK(h >= -1e-12);
    CHECK(h <= bound + 1e-9);
  }
}
