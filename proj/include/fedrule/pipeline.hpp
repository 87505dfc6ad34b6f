#pragma once

#include <chrono>
#include <vector>

#include "fedrule/data.hpp"
#include "fedrule/dp_hist.hpp"
#include "fedrule/fedda.hpp"
#include "fedrule/featurize.hpp"
#include "fedrule/model.hpp"
#include "fedrule/rulegen.hpp"

namespace fedrule {

struct TrainOptions {
  bool dp_noise = true;
  bool preprocess = true;  // false: skip shared cutoffs, split on local values
  bool weighted_aggregation = false;
  const std::vector<std::pair<double, double>>* hist_ranges = nullptr;
  std::vector<SolveTraceRow>* trace = nullptr;
};

struct TrainDiagnostics {
  std::size_t rules_before_dedup = 0;
  std::size_t rules_after_dedup = 0;
  double seconds_preprocess = 0.0;
  double seconds_rulegen = 0.0;
  double seconds_ensemble = 0.0;  // featurization + coefficient estimation
  CutoffSet cutoffs;              // shared candidates (empty when preprocess off)
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace detail

// End-to-end training: shared-cutoff preprocessing, per-client rule
// generation, featurization, and federated coefficient estimation. All
// randomness derives from config.rng_seed.
inline RuleFitModel train(const ClientPartition& partition, const FedConfig& config,
                          const TrainOptions& options = {},
                          TrainDiagnostics* diagnostics = nullptr) {
  partition.validate();
  config.validate();
  const RngStream rng(config.rng_seed);
  TrainDiagnostics local_diag;
  TrainDiagnostics& diag = diagnostics ? *diagnostics : local_diag;

  auto t0 = std::chrono::steady_clock::now();
  CutoffEstimate preprocess;
  LinearTermSpec linear_spec;
  if (options.preprocess) {
    preprocess = build_cutoff_set(partition, config, rng, options.dp_noise,
                                  options.hist_ranges);
    linear_spec = make_linear_term_spec(partition, preprocess.winsor_lower,
                                        preprocess.winsor_upper);
    diag.cutoffs = preprocess.cutoffs;
  } else {
    linear_spec = make_linear_term_spec_empirical(partition, config.winsor_q);
  }
  diag.seconds_preprocess = detail::seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  RuleSet rules = federated_rule_generation(
      partition, options.preprocess ? &preprocess.cutoffs : nullptr, config, rng,
      &diag.rules_before_dedup);
  diag.rules_after_dedup = rules.size();
  diag.seconds_rulegen = detail::seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  std::vector<ClientDesign> designs;
  designs.reserve(partition.n_clients());
  for (const auto& client : partition.clients) {
    ClientDesign cd;
    cd.design = build_design(client, rules, linear_spec);
    cd.labels = client.outcomes;
    designs.push_back(std::move(cd));
  }

  SolveOptions solve_options;
  solve_options.weighted_aggregation = options.weighted_aggregation;
  solve_options.trace = options.trace;
  CoefficientVector coef = solve(designs, config, solve_options);
  diag.seconds_ensemble = detail::seconds_since(t0);

  RuleFitModel model;
  model.rules = std::move(rules);
  model.linear_spec = std::move(linear_spec);
  model.coefficients = std::move(coef);
  model.supports = rule_support(model.rules, partition);
  model.feature_names = partition.clients.front().feature_names;
  model.info.config = config;
  model.info.seed = config.rng_seed;
  model.info.rules_before_dedup = diag.rules_before_dedup;
  model.info.rules_after_dedup = diag.rules_after_dedup;
  model.info.dp_noise = options.dp_noise;
  model.info.preprocess = options.preprocess;
  model.validate();
  return model;
}

}  // namespace fedrule
