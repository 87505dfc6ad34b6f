#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fedrule/synth.hpp"

using namespace fedrule;

TEST_CASE("gen_covariates draws standard normal columns", "[synth]") {
  const std::size_t n = 1000, p = 10;
  const auto x = gen_covariates(n, p, 123);
  REQUIRE(x.size() == n * p);
  for (std::size_t j = 0; j < p; ++j) {
    double mean = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x[i * p + j];
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = x[i * p + j] - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    REQUIRE(std::fabs(mean) < 0.15);
    REQUIRE(std::fabs(sd - 1.0) < 0.15);
  }
}

TEST_CASE("gen_covariates shape and determinism", "[synth]") {
  const auto one = gen_covariates(1, 10, 5);
  REQUIRE(one.size() == 10);
  for (double v : one) REQUIRE(std::isfinite(v));
  REQUIRE(gen_covariates(50, 10, 5) == gen_covariates(50, 10, 5));
  REQUIRE(gen_covariates(50, 10, 5) != gen_covariates(50, 10, 6));
  REQUIRE_THROWS_AS(gen_covariates(10, 4, 1), config_error);
}

TEST_CASE("generative model predictors", "[synth]") {
  const std::vector<double> zeros(10, 0.0);
  REQUIRE(linear_predictor(zeros, OutcomeModel::linear) == 0.0);
  REQUIRE(linear_predictor(zeros, OutcomeModel::nonlinear) == 0.0);

  std::vector<double> e1(10, 0.0);
  e1[0] = 1.0;
  REQUIRE(linear_predictor(e1, OutcomeModel::linear) == 5.0);
}

TEST_CASE("predictors match an independently coded reference", "[synth]") {
  // reference expressions arranged differently from the implementation
  auto ref_linear = [](const std::vector<double>& x) {
    const double coef[5] = {5, -4, 3, -2, 1};
    double s = 0.0;
    for (int j = 4; j >= 0; --j) s += coef[j] * x[j];
    return s;
  };
  auto ref_nonlinear = [](const std::vector<double>& x) {
    double s = 2.0 * std::sin(x[4]) - 4.0 * std::sin(x[3]) + 6.0 * std::sin(x[2]);
    s -= 10.0 / std::exp(2.0 * x[1] * x[1]);
    s += 10.0 / std::exp(2.0 * x[0] * x[0]);
    return s;
  };

  RngStream rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> x(10);
    for (auto& v : x) v = rng.uniform(-3.0, 3.0);
    REQUIRE(linear_predictor(x, OutcomeModel::linear) ==
            Catch::Approx(ref_linear(x)).margin(1e-12));
    REQUIRE(linear_predictor(x, OutcomeModel::nonlinear) ==
            Catch::Approx(ref_nonlinear(x)).margin(1e-12));
  }
}

TEST_CASE("gen_outcomes follows the logistic model", "[synth]") {
  SECTION("saturated positive") {
    const std::vector<double> eta(100, 50.0);
    for (int y : gen_outcomes(eta, 1)) REQUIRE(y == 1);
  }
  SECTION("saturated negative") {
    const std::vector<double> eta(100, -50.0);
    for (int y : gen_outcomes(eta, 1)) REQUIRE(y == 0);
  }
  SECTION("balanced at eta = 0") {
    const std::vector<double> eta(10000, 0.0);
    const auto y = gen_outcomes(eta, 77);
    double frac = 0.0;
    for (int v : y) frac += v;
    frac /= static_cast<double>(y.size());
    REQUIRE(std::fabs(frac - 0.5) < 0.02);
  }
}

TEST_CASE("scenario 1 splits evenly across clients", "[synth]") {
  ScenarioSpec spec;
  spec.kind = ScenarioKind::client_count;
  spec.n_clients = 5;
  spec.model = OutcomeModel::linear;
  const auto [train, test] = gen_scenario(spec, 11);
  REQUIRE(train.n_clients() == 5);
  REQUIRE(test.n_clients() == 5);
  for (const auto& c : train.clients) REQUIRE(c.n_rows() == 200);
  for (const auto& c : test.clients) REQUIRE(c.n_rows() == 200);
}

TEST_CASE("outcome imbalance hits exact positive counts", "[synth]") {
  ScenarioSpec spec;
  spec.kind = ScenarioKind::outcome_imbalance;
  spec.n_clients = 5;
  spec.model = OutcomeModel::linear;

  SECTION("balanced prevalences") {
    spec.proportions = {0.5, 0.5, 0.5, 0.5, 0.5};
    const auto [train, test] = gen_scenario(spec, 3);
    for (const auto& c : train.clients) {
      REQUIRE(c.n_rows() == 200);
      int pos = 0;
      for (int y : c.outcomes) pos += y;
      REQUIRE(pos == 100);
    }
  }
  SECTION("highly imbalanced prevalences") {
    spec.proportions = {0.125, 0.250, 0.375, 0.875, 0.875};
    const auto [train, test] = gen_scenario(spec, 3);
    const std::vector<int> expected{25, 50, 75, 175, 175};
    for (std::size_t m = 0; m < 5; ++m) {
      int pos = 0;
      for (int y : train.clients[m].outcomes) pos += y;
      REQUIRE(pos == expected[m]);
    }
  }
}

TEST_CASE("gen_scenario is deterministic and train/test independent", "[synth]") {
  ScenarioSpec spec;
  spec.kind = ScenarioKind::size_imbalance;
  spec.n_clients = 5;
  spec.proportions = {0.05, 0.1, 0.15, 0.25, 0.45};
  spec.model = OutcomeModel::nonlinear;

  const auto [train_a, test_a] = gen_scenario(spec, 21);
  const auto [train_b, test_b] = gen_scenario(spec, 21);
  REQUIRE(train_a.clients[0].covariates == train_b.clients[0].covariates);
  REQUIRE(test_a.clients[4].covariates == test_b.clients[4].covariates);
  REQUIRE(train_a.clients[0].covariates != test_a.clients[0].covariates);

  const std::vector<std::size_t> expected{50, 100, 150, 250, 450};
  for (std::size_t m = 0; m < 5; ++m)
    REQUIRE(train_a.clients[m].n_rows() == expected[m]);
}

TEST_CASE("scenario validation", "[synth]") {
  ScenarioSpec spec;
  spec.kind = ScenarioKind::outcome_imbalance;
  spec.n_clients = 2;
  spec.proportions = {0.5, 1.5};
  REQUIRE_THROWS_AS(spec.validate(), config_error);
  spec.proportions = {0.5};
  REQUIRE_THROWS_AS(spec.validate(), config_error);
}
