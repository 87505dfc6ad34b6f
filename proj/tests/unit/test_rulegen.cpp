#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "../common/test_util.hpp"
#include "fedrule/dp_hist.hpp"
#include "fedrule/fedda.hpp"
#include "fedrule/rulegen.hpp"
#include "fedrule/synth.hpp"

using namespace fedrule;

TEST_CASE("sample_leaves", "[rulegen]") {
  RngStream rng(31);

  SECTION("mean depth 2 always yields stumps") {
    for (int i = 0; i < 100; ++i) REQUIRE(sample_leaves(2.0, rng) == 2);
  }
  SECTION("draws stay at or above 2") {
    for (int i = 0; i < 1000; ++i) REQUIRE(sample_leaves(6.0, rng) >= 2);
  }
  SECTION("mean matches the exact floored-exponential expectation") {
    // E[T] = 2 + sum_{k>=1} P(omega >= k), omega ~ Exp(rate 1/(Lbar-2))
    const double mean_depth = 4.0;
    const double rate = 1.0 / (mean_depth - 2.0);
    double expected = 2.0;
    for (int k = 1; k < 200; ++k) expected += std::exp(-rate * k);

    const int n = 100000;
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += sample_leaves(mean_depth, rng);
    mean /= n;
    REQUIRE(std::fabs(mean - expected) < 0.05);
  }
  SECTION("invalid mean depth") {
    REQUIRE_THROWS_AS(sample_leaves(1.5, rng), config_error);
  }
}

TEST_CASE("single stump recovers class-conditional residual means", "[rulegen]") {
  CutoffSet cutoffs;
  cutoffs.per_covariate = {{0.5}};
  FedConfig config;
  config.n_trees = 1;
  config.mean_depth = 2.0;
  config.subsample = 1.0;  // closed forms below assume full-data fitting

  SECTION("balanced outcomes give F0 = 0 and leaves +-0.5") {
    const auto data = testutil::make_dataset({0, 0, 1, 1}, {{0}, {0}, {1}, {1}});
    RngStream rng(1);
    const auto trees = fit_local_gbdt(data, cutoffs, config, rng);
    REQUIRE(trees.size() == 1);
    const Tree& tree = trees[0];
    REQUIRE(tree.leaf_count() == 2);
    REQUIRE(tree.nodes[0].split_covariate == 0);
    REQUIRE(tree.nodes[0].split_value == 0.5);
    REQUIRE(tree.nodes[tree.nodes[0].left].weight == Catch::Approx(-0.5).margin(1e-15));
    REQUIRE(tree.nodes[tree.nodes[0].right].weight == Catch::Approx(0.5).margin(1e-15));
  }
  SECTION("imbalanced outcomes shift the residual means") {
    const auto data = testutil::make_dataset({0, 1, 1, 1}, {{0}, {1}, {1}, {1}});
    RngStream rng(1);
    const auto trees = fit_local_gbdt(data, cutoffs, config, rng);
    // F0 = log(3/1); sigmoid(F0) = 0.75
    const Tree& tree = trees[0];
    REQUIRE(tree.nodes[tree.nodes[0].left].weight == Catch::Approx(-0.75).margin(1e-12));
    REQUIRE(tree.nodes[tree.nodes[0].right].weight == Catch::Approx(0.25).margin(1e-12));
  }
}

TEST_CASE("zero shrinkage keeps residuals constant across iterations", "[rulegen]") {
  CutoffSet cutoffs;
  cutoffs.per_covariate = {{0.5}};
  FedConfig config;
  config.n_trees = 5;
  config.shrinkage = 0.0;
  config.subsample = 1.0;
  const auto data = testutil::make_dataset({0, 0, 1, 1}, {{0}, {0}, {1}, {1}});
  RngStream rng(1);
  const auto trees = fit_local_gbdt(data, cutoffs, config, rng);
  REQUIRE(trees.size() == 5);
  for (const auto& tree : trees) {
    REQUIRE(tree.nodes[tree.nodes[0].left].weight == trees[0].nodes[1].weight);
    REQUIRE(tree.nodes[tree.nodes[0].right].weight == trees[0].nodes[2].weight);
  }
}

TEST_CASE("fit_local_gbdt preconditions", "[rulegen]") {
  CutoffSet cutoffs;
  cutoffs.per_covariate = {{0.5}};
  FedConfig config;
  SECTION("single-class data") {
    const auto data = testutil::make_dataset({1, 1, 1}, {{0}, {0}, {1}});
    RngStream rng(1);
    REQUIRE_THROWS_AS(fit_local_gbdt(data, cutoffs, config, rng), data_error);
  }
  SECTION("cutoffs empty for every covariate") {
    const auto data = testutil::make_dataset({0, 1}, {{0}, {1}});
    CutoffSet empty;
    empty.per_covariate = {{}};
    RngStream rng(1);
    REQUIRE_THROWS_AS(fit_local_gbdt(data, empty, config, rng), data_error);
  }
}

TEST_CASE("extract_rules emits 2(T-1) path rules per tree", "[rulegen]") {
  SECTION("stump") {
    Tree stump;
    stump.nodes.resize(3);
    stump.nodes[0] = {0, 0.5, 0.0, 1, 2};
    const auto rules = extract_rules({stump});
    REQUIRE(rules.size() == 2);
    REQUIRE(rules[0].conditions.size() == 1);
    REQUIRE(rules[0].conditions[0].upper == 0.5);      // x1 < 0.5
    REQUIRE(rules[1].conditions[0].lower == 0.5);      // x1 >= 0.5
    REQUIRE(!std::isfinite(rules[0].conditions[0].lower));
    REQUIRE(!std::isfinite(rules[1].conditions[0].upper));
  }
  SECTION("three leaves, repeated covariate canonicalizes by intersection") {
    // root: x1 >= 1 ? ; right child: x1 >= 2 ?
    Tree tree;
    tree.nodes.resize(5);
    tree.nodes[0] = {0, 1.0, 0.0, 1, 2};
    tree.nodes[2] = {0, 2.0, 0.0, 3, 4};
    const auto rules = extract_rules({tree});
    REQUIRE(rules.size() == 4);  // T = 3 -> 2(T-1) = 4
    // deepest right rule {x1 >= 1 & x1 >= 2} collapses to {x1 >= 2}
    const Rule& deep = rules[3];
    REQUIRE(deep.conditions.size() == 1);
    REQUIRE(deep.conditions[0].lower == 2.0);
    REQUIRE(!std::isfinite(deep.conditions[0].upper));
    // middle region is the half-open window [1, 2)
    const Rule& window = rules[2];
    REQUIRE(window.conditions[0].lower == 1.0);
    REQUIRE(window.conditions[0].upper == 2.0);
  }
}

TEST_CASE("path siblings are mutually exclusive and exhaustive", "[rulegen]") {
  Tree stump;
  stump.nodes.resize(3);
  stump.nodes[0] = {0, 0.3, 0.0, 1, 2};
  const auto rules = extract_rules({stump});
  RngStream rng(8);
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> x{rng.uniform(-2.0, 2.0)};
    const int fired = (rules[0].matches(x) ? 1 : 0) + (rules[1].matches(x) ? 1 : 0);
    REQUIRE(fired == 1);
  }
}

TEST_CASE("dedup_rules collapses logically equivalent rules", "[rulegen]") {
  const Rule a = canonicalize({{0, 1.0, kPosInf}, {1, kNegInf, 1.0}});
  const Rule b = canonicalize({{1, kNegInf, 1.0}, {0, 1.0, kPosInf}});
  const Rule c = canonicalize({{0, kNegInf, 0.5}});

  SECTION("reordered conjunction is one rule") {
    const auto set = dedup_rules({a, b});
    REQUIRE(set.size() == 1);
  }
  SECTION("empty input") {
    REQUIRE(dedup_rules({}).size() == 0);
  }
  SECTION("multiset to set") {
    const auto set = dedup_rules({a, a, a, c});
    REQUIRE(set.size() == 2);
  }
  SECTION("idempotent and order-insensitive") {
    const auto once = dedup_rules({c, a, b, c, a});
    const auto twice = dedup_rules(once.rules);
    REQUIRE(once.rules == twice.rules);
    const auto permuted = dedup_rules({a, c, a, c, b});
    REQUIRE(once.rules == permuted.rules);
  }
}

namespace {

ClientPartition synthetic_partition(std::size_t n, std::size_t m, std::uint64_t seed) {
  ScenarioSpec spec;
  spec.kind = ScenarioKind::client_count;
  spec.n_clients = m;
  spec.n_total = n;
  spec.model = OutcomeModel::linear;
  return gen_scenario(spec, seed).first;
}

}  // namespace

TEST_CASE("every split value belongs to the shared cutoff set", "[rulegen]") {
  const auto part = synthetic_partition(300, 2, 17);
  FedConfig config;
  config.n_trees = 25;
  config.mean_depth = 3.0;
  const RngStream rng(55);
  const auto est = build_cutoff_set(part, config, rng, true);

  for (std::size_t m = 0; m < part.n_clients(); ++m) {
    RngStream client_rng = rng.derive("gbdt", m);
    const auto trees = fit_local_gbdt(part.clients[m], est.cutoffs, config, client_rng);
    for (const auto& tree : trees) {
      const auto rules = extract_rules({tree});
      REQUIRE(rules.size() == 2 * (tree.leaf_count() - 1));
      for (const auto& node : tree.nodes) {
        if (node.is_leaf()) continue;
        const auto& cj = est.cutoffs.per_covariate[node.split_covariate];
        REQUIRE(std::find(cj.begin(), cj.end(), node.split_value) != cj.end());
      }
    }
  }
}

TEST_CASE("training deviance is non-increasing at small shrinkage", "[rulegen]") {
  const auto part = synthetic_partition(200, 1, 23);
  const Dataset& data = part.clients[0];
  FedConfig config;
  config.n_trees = 30;
  config.subsample = 1.0;  // monotone-descent guarantee is a full-data property
  const auto est = build_cutoff_set(part, config, RngStream(2), false);
  RngStream rng(3);
  const auto trees = fit_local_gbdt(data, est.cutoffs, config, rng);

  double pos = 0.0;
  for (int y : data.outcomes) pos += y;
  const double f0 = std::log(pos / (data.n_rows() - pos));
  std::vector<double> score(data.n_rows(), f0);

  auto deviance = [&] {
    double d = 0.0;
    for (std::size_t i = 0; i < data.n_rows(); ++i)
      d += log1p_exp(score[i]) - data.outcomes[i] * score[i];
    return d;
  };

  double prev = deviance();
  for (const auto& tree : trees) {
    for (std::size_t i = 0; i < data.n_rows(); ++i)
      score[i] += config.shrinkage * tree.predict(data.row(i));
    const double cur = deviance();
    REQUIRE(cur <= prev + 1e-9);
    prev = cur;
  }
}

TEST_CASE("federated rule generation", "[rulegen]") {
  FedConfig config;
  config.n_trees = 15;

  SECTION("single client equals the direct pipeline") {
    const auto part = synthetic_partition(150, 1, 29);
    const RngStream rng(71);
    const auto est = build_cutoff_set(part, config, rng, false);
    std::size_t raw = 0;
    const auto fed = federated_rule_generation(part, est.cutoffs, config, rng, &raw);

    RngStream direct_rng = rng.derive("gbdt", 0);
    const auto trees = fit_local_gbdt(part.clients[0], est.cutoffs, config, direct_rng);
    const auto direct = dedup_rules(extract_rules(trees));
    REQUIRE(fed.rules == direct.rules);
    REQUIRE(raw >= fed.size());
  }
  SECTION("identical client data and seeds fully dedup") {
    // deterministic fitting: no subsample draws, stumps at mean depth 2
    FedConfig det_config = config;
    det_config.subsample = 1.0;
    const auto part = synthetic_partition(100, 1, 31);
    ClientPartition twins;
    twins.clients = {part.clients[0], part.clients[0]};
    twins.client_ids = {"a", "b"};
    const RngStream rng(72);
    const auto est = build_cutoff_set(part, det_config, rng, false);

    const auto solo = federated_rule_generation(part, est.cutoffs, det_config, rng);
    const auto both = federated_rule_generation(twins, est.cutoffs, det_config, rng);
    REQUIRE(both.rules == solo.rules);
  }
  SECTION("client errors carry the client id") {
    ClientPartition part;
    part.clients.push_back(testutil::make_dataset({1, 1}, {{0}, {1}}));
    part.client_ids.push_back("bad_client");
    CutoffSet cutoffs;
    cutoffs.per_covariate = {{0.5}};
    REQUIRE_THROWS_WITH(federated_rule_generation(part, cutoffs, config, RngStream(1)),
                        Catch::Matchers::ContainsSubstring("bad_client"));
  }
}

TEST_CASE("rule display strings read naturally", "[rulegen]") {
  const Rule r = canonicalize({{0, kNegInf, 57.23}, {2, 5.086, kPosInf}});
  const std::string s = format_rule(r, {"age", "sex", "GCS"});
  REQUIRE(s == "age < 57.23 & GCS >= 5.086");
}
