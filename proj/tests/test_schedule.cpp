#include <doctest.h>

#include "idm/rng.hpp"
#include "idm/schedule.hpp"

using namespace idm;

TEST_CASE("schedule: single step uses beta_start") {
  const NoiseSchedule s = make_linear_schedule(1, 0.1, 0.1);
  CHECK(s.alphas[0] == doctest::Approx(0.9));
  CHECK(s.gammas[0] == doctest::Approx(0.9));
}

TEST_CASE("schedule: gamma matches an extended-precision product oracle") {
  const NoiseSchedule s = make_linear_schedule(1000, 1e-4, 0.02);
  long double running = 1.0L;
  for (int t = 1; t <= 1000; ++t) {
    const long double beta = 1e-4L + (t - 1) / 999.0L * (0.02L - 1e-4L);
    running *= (1.0L - beta);
  }
  const double oracle = static_cast<double>(running);
  CHECK(std::abs(s.gamma(1000) - oracle) / oracle < 1e-6);
  // and every prefix stays within the same tolerance
  running = 1.0L;
  for (int t = 1; t <= 1000; ++t) {
    const long double beta = 1e-4L + (t - 1) / 999.0L * (0.02L - 1e-4L);
    running *= (1.0L - beta);
    if (t % 100 == 0)
      CHECK(std::abs(s.gamma(t) - static_cast<double>(running)) / static_cast<double>(running) < 1e-6);
  }
}

TEST_CASE("schedule: gammas strictly decreasing and positive") {
  RngStream rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int T = static_cast<int>(rng.uniform_int(2, 2000));
    const double b0 = rng.uniform(1e-5, 5e-3);
    const double b1 = rng.uniform(b0, 0.05);
    const NoiseSchedule s = make_linear_schedule(T, b0, b1);
    CHECK(s.gammas[0] < 1.0);
    CHECK(s.gammas[T - 1] > 0.0);
    for (int t = 2; t <= T; ++t) CHECK(s.gamma(t) < s.gamma(t - 1));
  }
}

TEST_CASE("schedule: rejects invalid parameters") {
  CHECK_THROWS_AS(make_linear_schedule(0, 1e-4, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(make_linear_schedule(10, 0.0, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(make_linear_schedule(10, 0.03, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(make_linear_schedule(10, 1e-4, 1.0), std::invalid_argument);
}

TEST_CASE("plan: K = T is the identity plan") {
  const NoiseSchedule s = make_linear_schedule(50, 1e-4, 0.02);
  const InferencePlan plan = make_inference_plan(s, 50);
  for (int k = 1; k <= 50; ++k) {
    CHECK(plan.t_indices[k - 1] == k);
    CHECK(plan.alpha(k) == doctest::Approx(s.alpha(k)).epsilon(1e-12));
    CHECK(plan.gamma(k) == s.gamma(k));
  }
}

TEST_CASE("plan: K = 1 collapses to the terminal gamma") {
  const NoiseSchedule s = make_linear_schedule(100, 1e-4, 0.02);
  const InferencePlan plan = make_inference_plan(s, 1);
  CHECK(plan.K == 1);
  CHECK(plan.t_indices[0] == 100);
  CHECK(plan.gamma(1) == s.gamma(100));
  CHECK(plan.alpha(1) == doctest::Approx(s.gamma(100)));
}

TEST_CASE("plan: T=1000 K=10 grid and ratio oracle") {
  const NoiseSchedule s = make_linear_schedule(1000, 1e-4, 0.02);
  const InferencePlan plan = make_inference_plan(s, 10);
  for (int k = 1; k <= 10; ++k) CHECK(plan.t_indices[k - 1] == 100 * k);
  // effective alphas against the direct gamma-ratio oracle
  double prev = 1.0;
  for (int k = 1; k <= 10; ++k) {
    const double ratio = s.gamma(100 * k) / prev;
    CHECK(plan.alpha(k) == doctest::Approx(ratio).epsilon(1e-12));
    prev = s.gamma(100 * k);
  }
}

TEST_CASE("plan: effective alphas telescope to gamma_T") {
  RngStream rng(17);
  for (int trial = 0; trial < 30; ++trial) {
    const int T = static_cast<int>(rng.uniform_int(5, 1500));
    const int K = static_cast<int>(rng.uniform_int(1, T));
    const NoiseSchedule s = make_linear_schedule(T, 1e-4, 0.02);
    const InferencePlan plan = make_inference_plan(s, K);
    CHECK(plan.t_indices.back() == T);
    for (int k = 1; k < K; ++k) CHECK(plan.t_indices[k] > plan.t_indices[k - 1]);
    double product = 1.0;
    for (int k = 1; k <= K; ++k) product *= plan.alpha(k);
    CHECK(std::abs(product - s.gamma(T)) / s.gamma(T) < 1e-6);
  }
}

TEST_CASE("plan: rejects K outside [1, T]") {
  const NoiseSchedule s = make_linear_schedule(10, 1e-4, 0.02);
  CHECK_THROWS_AS(make_inference_plan(s, 0), std::invalid_argument);
  CHECK_THROWS_AS(make_inference_plan(s, 11), std::invalid_argument);
}
