#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "pdranpg/cmdp.hpp"
#include "pdranpg/rng.hpp"

using namespace pdranpg;

TEST_CASE("streams are deterministic and child streams are addressable") {
  rng_stream a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  rng_stream root(7);
  rng_stream c1 = root.child(3);
  rng_stream c2 = root.child(3);
  CHECK(c1.next_u64() == c2.next_u64());
  CHECK(root.child(3).stream_id() != root.child(4).stream_id());
  CHECK(root.child(3).stream_id() != rng_stream(8).child(3).stream_id());
}

TEST_CASE("child streams decorrelate from parents and siblings") {
  rng_stream root(123);
  std::set<std::uint64_t> firsts;
  for (int i = 0; i < 1000; ++i) firsts.insert(root.child(i).next_u64());
  CHECK(firsts.size() == 1000);
}

TEST_CASE("uniform doubles live in [0,1) with the right mean") {
  rng_stream rng(5);
  double sum = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.next_double();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / n - 0.5) < 0.005);
}

TEST_CASE("gaussian moments") {
  rng_stream rng(6);
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double g = rng.next_gaussian();
    sum += g;
    sq += g * g;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
}

TEST_CASE("geometric horizon inverse CDF") {
  CHECK(geometric_from_uniform(0.0, 0.7) == 0);
  // P(T=0) = 0.1 covers u = 0.05 at gamma = 0.9.
  CHECK(geometric_from_uniform(0.9, 0.05) == 0);
  CHECK(geometric_from_uniform(0.9, 0.10001) == 1);
  rng_stream rng(11);
  CHECK_THROWS_AS(sample_geometric_horizon(1.0, rng), validation_error);

  SUBCASE("gamma = 0 always returns 0") {
    rng_stream r(3);
    for (int i = 0; i < 50; ++i) CHECK(sample_geometric_horizon(0.0, r) == 0);
  }
}

TEST_CASE("geometric horizon mean matches the series oracle at gamma=0.9") {
  // Oracle: E[T] = sum_j j (1-gamma) gamma^j, truncated once the tail is dust.
  const double gamma = 0.9;
  double expected = 0, tail = 1;
  for (int j = 0; tail > 1e-16; ++j) {
    const double p = (1 - gamma) * std::pow(gamma, j);
    expected += j * p;
    tail = std::pow(gamma, j + 1);
  }
  CHECK(expected == doctest::Approx(9.0).epsilon(1e-9));

  rng_stream rng(2024);
  double sum = 0;
  const long n = 1000000;
  for (long i = 0; i < n; ++i) sum += static_cast<double>(sample_geometric_horizon(gamma, rng));
  CHECK(std::abs(sum / static_cast<double>(n) - expected) < 0.05);
}
