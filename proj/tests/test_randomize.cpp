#include <doctest.h>

#include <cmath>
#include <random>

#include "ldpinf/randomize.hpp"
#include "support.hpp"

using namespace ldpinf;

namespace {

Dataset two_binary_plus_ternary() {
  Dataset ds;
  ds.attributes = {{"a", {"0", "1"}, Encoding::OneHot},
                   {"b", {"0", "1"}, Encoding::OneHot},
                   {"c", {"x", "y", "z"}, Encoding::OneHot},
                   {"y", {"0", "1"}, Encoding::OneHot}};
  ds.label_attribute = 3;
  ds.records = {{0, 1, 2, 1}};
  return ds;
}

}  // namespace

TEST_CASE("distortion matrix examples") {
  const Matrix P = build_distortion(2, std::log(3.0)).dense();
  CHECK(P(0, 0) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(P(0, 1) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(P(1, 0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(P(1, 1) == doctest::Approx(0.75).epsilon(1e-15));

  const Matrix U = build_distortion(4, 0.0).dense();
  CHECK((U.array() == 0.25).all());

  CHECK(build_distortion(2, 10.0).keep_probability() >= 0.9999);
  CHECK(build_distortion(3, 1e6).keep_probability() == 1.0);
  CHECK(build_distortion(3, 1e6).switch_probability() == 0.0);

  CHECK_THROWS_AS(build_distortion(1, 1.0), ConfigError);
  CHECK_THROWS_AS(build_distortion(3, -0.1), ConfigError);
}

TEST_CASE("distortion matrices are row-stochastic and symmetric") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> size(2, 16);
  std::uniform_real_distribution<double> eps(0.0, 10.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int C = size(rng);
    const double e = eps(rng);
    const DistortionMatrix D(C, e);
    const Matrix P = D.dense();
    CHECK((P.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
    CHECK((P - P.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(std::abs(P(0, 0) - std::exp(e) / (C - 1 + std::exp(e))) <= 1e-12);
  }
}

TEST_CASE("randomize_value lays out the unit interval") {
  const DistortionMatrix P(4, std::log(3.0));  // keep 1/2, each switch 1/6
  CHECK(randomize_value(2, P, 0.0) == 2);
  CHECK(randomize_value(2, P, 0.49) == 2);
  CHECK(randomize_value(2, P, 0.51) == 0);
  CHECK(randomize_value(2, P, 0.70) == 1);
  CHECK(randomize_value(2, P, 0.90) == 3);
  CHECK(randomize_value(2, P, 0.999999) == 3);
}

TEST_CASE("shared draws give nested changes across epsilon") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 2000; ++trial) {
    const double u = unit(rng);
    const bool changed_high = randomize_value(1, DistortionMatrix(3, 2.0), u) != 1;
    const bool changed_low = randomize_value(1, DistortionMatrix(3, 0.5), u) != 1;
    if (changed_high) CHECK(changed_low);
  }
}

TEST_CASE("perturb_record honours the plan") {
  const auto ds = two_binary_plus_ternary();
  const auto& rec = ds.records[0];

  const auto strong = PerturbationPlan::make(ds, {{"a", 1e6}, {"c", 1e6}, {"y", 1e6}});
  int unchanged = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) unchanged += perturb_record(rec, strong, s) == rec;
  CHECK(unchanged >= 999);

  const auto only_a = PerturbationPlan::make(ds, {{"a", 0.0}});
  int flips = 0;
  for (std::uint64_t s = 0; s < 10000; ++s) {
    const auto out = perturb_record(rec, only_a, s);
    CHECK(out[1] == rec[1]);
    CHECK(out[2] == rec[2]);
    CHECK(out[3] == rec[3]);
    flips += out[0] != rec[0];
  }
  CHECK(std::abs(flips / 10000.0 - 0.5) <= 0.02);

  CHECK(perturb_record(rec, only_a, 77) == perturb_record(rec, only_a, 77));
  CHECK(record_seed(5, 1) != record_seed(5, 2));
  CHECK(record_seed(5, 1) != record_seed(6, 1));
}

TEST_CASE("plan construction errors") {
  const auto ds = two_binary_plus_ternary();
  CHECK_THROWS_AS(PerturbationPlan::make(ds, {}), ConfigError);
  CHECK_THROWS_AS(PerturbationPlan::make(ds, {{"a", 1.0}, {"a", 2.0}}), ConfigError);
  CHECK_THROWS_AS(PerturbationPlan::make(ds, {{"a", -1.0}}), ConfigError);
  CHECK_THROWS(PerturbationPlan::make(ds, {{"nope", 1.0}}));
  const auto plan = PerturbationPlan::make(ds, {{"a", 1.0}, {"c", 2.0}});
  CHECK(plan.contains(2));
  CHECK_FALSE(plan.contains(1));
  for (const auto& e : plan.with_epsilon(0.3).entries) CHECK(e.epsilon == 0.3);
}

TEST_CASE("outcome and change probabilities") {
  const auto ds = two_binary_plus_ternary();
  const double ln3 = std::log(3.0);
  const auto one = PerturbationPlan::make(ds, {{"a", ln3}});
  const std::vector<int> zero = {0};
  CHECK(outcome_probability(zero, zero, one) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(change_probability(one) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(change_probability(PerturbationPlan::make(ds, {{"a", 0.0}})) == doctest::Approx(0.5).epsilon(1e-15));

  const auto two = PerturbationPlan::make(ds, {{"a", ln3}, {"b", ln3}});
  const std::vector<int> alpha = {0, 1};
  const std::vector<int> both_changed = {1, 0};
  CHECK(outcome_probability(alpha, both_changed, two) == doctest::Approx(0.0625).epsilon(1e-15));
  CHECK(change_probability(two) == doctest::Approx(0.4375).epsilon(1e-15));
}

TEST_CASE("outcome probabilities sum to one over the joint space") {
  const auto ds = two_binary_plus_ternary();
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> eps(0.0, 6.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto plan = PerturbationPlan::make(ds, {{"a", eps(rng)}, {"c", eps(rng)}, {"y", eps(rng)}});
    const std::vector<int> alpha = {trial % 2, trial % 3, (trial + 1) % 2};
    double total = 0.0;
    std::vector<int> out(3);
    for (out[0] = 0; out[0] < 2; ++out[0]) {
      for (out[1] = 0; out[1] < 3; ++out[1]) {
        for (out[2] = 0; out[2] < 2; ++out[2]) total += outcome_probability(alpha, out, plan);
      }
    }
    CHECK(std::abs(total - 1.0) <= 1e-10);
    CHECK(std::abs(change_probability(plan) - (1.0 - outcome_probability(alpha, alpha, plan))) <= 1e-15);
  }
}

TEST_CASE("observed distribution examples") {
  const DistortionMatrix P(2, std::log(3.0));
  const auto lambda = observed_distribution({(Vector(2) << 1.0, 0.0).finished()}, P).proportions;
  CHECK(lambda[0] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(lambda[1] == doctest::Approx(0.25).epsilon(1e-15));

  const Vector uniform = Vector::Constant(5, 0.2);
  CHECK((observed_distribution({uniform}, DistortionMatrix(5, 1.3)).proportions - uniform).norm() <= 1e-15);

  const Vector pi = (Vector(3) << 0.5, 0.3, 0.2).finished();
  CHECK((observed_distribution({pi}, DistortionMatrix(3, 40.0)).proportions - pi).norm() <= 1e-6);

  // Against the dense P^T pi.
  const DistortionMatrix Q(3, 0.7);
  CHECK((observed_distribution({pi}, Q).proportions - Q.dense().transpose() * pi).norm() <= 1e-15);
}

TEST_CASE("recover inverts observe") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> size(2, 16);
  std::uniform_real_distribution<double> eps(1e-3, 10.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int C = size(rng);
    Vector pi(C);
    for (int c = 0; c < C; ++c) pi[c] = unit(rng);
    pi /= pi.sum();
    const DistortionMatrix P(C, eps(rng));
    const auto back = recover_distribution(observed_distribution({pi}, P).proportions, P);
    CHECK((back.distribution.proportions - pi).cwiseAbs().maxCoeff() <= 1e-10);
  }
  CHECK_THROWS_AS(recover_distribution(Vector::Constant(3, 1.0 / 3), DistortionMatrix(3, 0.0)), NumericalError);
}

TEST_CASE("recovery from sampled reports") {
  const Vector pi = (Vector(4) << 0.4, 0.3, 0.2, 0.1).finished();
  const DistortionMatrix P(4, 1.0);
  std::mt19937_64 rng(12);
  std::discrete_distribution<int> truth(pi.data(), pi.data() + pi.size());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vector counts = Vector::Zero(4);
  const int samples = 100000;
  for (int i = 0; i < samples; ++i) counts[randomize_value(truth(rng), P, unit(rng))] += 1.0;
  const auto got = recover_distribution(counts / samples, P);
  CHECK((got.distribution.proportions - pi).lpNorm<1>() <= 0.05);
  CHECK(std::abs(got.distribution.proportions.sum() - 1.0) <= 1e-12);
}

TEST_CASE("clipping reports the removed mass") {
  const DistortionMatrix P(3, 0.5);
  // A report vector that no true distribution can produce.
  const Vector lambda = (Vector(3) << 0.9, 0.1, 0.0).finished();
  const auto got = recover_distribution(lambda, P);
  CHECK(got.clipped_mass > 0.0);
  CHECK((got.distribution.proportions.array() >= 0.0).all());
  CHECK(std::abs(got.distribution.proportions.sum() - 1.0) <= 1e-12);
}
