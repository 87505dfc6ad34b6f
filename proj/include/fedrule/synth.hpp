#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fedrule/data.hpp"
#include "fedrule/errors.hpp"
#include "fedrule/random.hpp"

namespace fedrule {

enum class OutcomeModel { linear, nonlinear };

enum class ScenarioKind { client_count, size_imbalance, outcome_imbalance };

// One federation scenario: how N_total rows are spread over M clients and
// which generative model links covariates to the outcome.
//  - client_count / size_imbalance: proportions are per-client size shares.
//  - outcome_imbalance: clients are equal-sized; proportions are per-client
//    positive-class prevalences.
struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::client_count;
  std::size_t n_clients = 5;
  std::vector<double> proportions;
  OutcomeModel model = OutcomeModel::linear;
  std::size_t n_total = 1000;
  std::size_t n_features = 10;

  void validate() const {
    if (n_clients < 1) throw config_error("scenario needs at least one client");
    if (n_total < n_clients) throw config_error("n_total must cover all clients");
    if (n_features < 5)
      throw config_error("generative models need at least 5 covariates");
    if (kind == ScenarioKind::client_count) {
      if (!proportions.empty() && proportions.size() != n_clients)
        throw config_error("proportions length must equal the client count");
    } else {
      if (proportions.size() != n_clients)
        throw config_error("proportions length must equal the client count");
      if (kind == ScenarioKind::outcome_imbalance)
        for (double q : proportions)
          if (!(q > 0.0 && q < 1.0))
            throw config_error("prevalences must lie in (0, 1)");
    }
  }

  std::vector<double> size_shares() const {
    if (kind == ScenarioKind::client_count && proportions.empty())
      return std::vector<double>(n_clients, 1.0 / static_cast<double>(n_clients));
    return proportions;
  }
};

inline std::vector<std::string> default_feature_names(std::size_t p) {
  std::vector<std::string> names;
  names.reserve(p);
  for (std::size_t j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
  return names;
}

// N x p draws from N(0, I). Only the first five columns carry signal.
inline std::vector<double> gen_covariates(std::size_t n, std::size_t p,
                                          std::uint64_t seed) {
  if (p < 5) throw config_error("generative models need at least 5 covariates");
  RngStream rng(seed);
  std::vector<double> x(n * p);
  for (auto& v : x) v = rng.normal();
  return x;
}

inline double linear_predictor(const double* x, std::size_t p, OutcomeModel model) {
  if (p < 5) throw config_error("linear predictor needs at least 5 covariates");
  if (model == OutcomeModel::linear)
    return 5.0 * x[0] - 4.0 * x[1] + 3.0 * x[2] - 2.0 * x[3] + x[4];
  return 10.0 * std::exp(-2.0 * x[0] * x[0]) - 10.0 * std::exp(-2.0 * x[1] * x[1]) +
         6.0 * std::sin(x[2]) - 4.0 * std::sin(x[3]) + 2.0 * std::sin(x[4]);
}

inline double linear_predictor(const std::vector<double>& x, OutcomeModel model) {
  return linear_predictor(x.data(), x.size(), model);
}

// Independent Bernoulli(sigmoid(eta)) draws.
inline std::vector<int> gen_outcomes(const std::vector<double>& eta,
                                     std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<int> y(eta.size());
  for (std::size_t i = 0; i < eta.size(); ++i) {
    if (!std::isfinite(eta[i])) throw numeric_error("linear predictor must be finite");
    const double prob = 1.0 / (1.0 + std::exp(-eta[i]));
    y[i] = rng.bernoulli(prob) ? 1 : 0;
  }
  return y;
}

namespace detail {

inline Dataset gen_pooled_dataset(const ScenarioSpec& spec, std::uint64_t seed) {
  Dataset ds;
  ds.n_features = spec.n_features;
  ds.feature_names = default_feature_names(spec.n_features);
  RngStream rng(seed);
  ds.covariates = gen_covariates(spec.n_total, spec.n_features,
                                 rng.derive("covariates").seed());
  std::vector<double> eta(spec.n_total);
  for (std::size_t i = 0; i < spec.n_total; ++i)
    eta[i] = linear_predictor(ds.covariates.data() + i * spec.n_features,
                              spec.n_features, spec.model);
  ds.outcomes = gen_outcomes(eta, rng.derive("outcomes").seed());
  return ds;
}

// Rejection-sample one client to an exact positive count. Draw budget is
// 1000 * N_m; exceeding it means the requested prevalence is unattainable.
inline Dataset gen_prevalence_client(const ScenarioSpec& spec, std::size_t n_rows,
                                     double prevalence, std::uint64_t seed) {
  Dataset ds;
  ds.n_features = spec.n_features;
  ds.feature_names = default_feature_names(spec.n_features);

  const std::size_t want_pos =
      static_cast<std::size_t>(std::llround(prevalence * static_cast<double>(n_rows)));
  const std::size_t want_neg = n_rows - want_pos;
  std::size_t have_pos = 0, have_neg = 0;

  RngStream rng(seed);
  RngStream xs = rng.derive("covariates");
  RngStream ys = rng.derive("outcomes");
  const std::size_t budget = 1000 * n_rows;
  std::vector<double> x(spec.n_features);

  for (std::size_t draw = 0; draw < budget && (have_pos < want_pos || have_neg < want_neg);
       ++draw) {
    for (auto& v : x) v = xs.normal();
    const double eta = linear_predictor(x.data(), spec.n_features, spec.model);
    const double prob = 1.0 / (1.0 + std::exp(-eta));
    const int y = ys.bernoulli(prob) ? 1 : 0;
    if (y == 1 && have_pos < want_pos) {
      ++have_pos;
    } else if (y == 0 && have_neg < want_neg) {
      ++have_neg;
    } else {
      continue;
    }
    ds.covariates.insert(ds.covariates.end(), x.begin(), x.end());
    ds.outcomes.push_back(y);
  }
  if (have_pos < want_pos || have_neg < want_neg)
    throw numeric_error("prevalence " + std::to_string(prevalence) +
                        " unattainable within the sampling budget");
  return ds;
}

inline ClientPartition gen_partition(const ScenarioSpec& spec, std::uint64_t seed) {
  if (spec.kind == ScenarioKind::outcome_imbalance) {
    ClientPartition part;
    const std::size_t n_m = spec.n_total / spec.n_clients;
    RngStream rng(seed);
    for (std::size_t m = 0; m < spec.n_clients; ++m) {
      part.clients.push_back(gen_prevalence_client(
          spec, n_m, spec.proportions[m], rng.derive("client", m).seed()));
      part.client_ids.push_back("client_" + std::to_string(m + 1));
    }
    part.validate();
    return part;
  }
  RngStream rng(seed);
  const Dataset pooled = gen_pooled_dataset(spec, rng.derive("data").seed());
  return partition(pooled, spec.size_shares(), rng.derive("partition").seed());
}

}  // namespace detail

// Train and test partitions for one scenario; both sides mirror the scenario
// configuration and are generated from independent sub-seeds.
inline std::pair<ClientPartition, ClientPartition> gen_scenario(
    const ScenarioSpec& spec, std::uint64_t seed) {
  spec.validate();
  RngStream rng(seed);
  return {detail::gen_partition(spec, rng.derive("train").seed()),
          detail::gen_partition(spec, rng.derive("test").seed())};
}

inline std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::client_count: return "client_count";
    case ScenarioKind::size_imbalance: return "size_imbalance";
    case ScenarioKind::outcome_imbalance: return "outcome_imbalance";
  }
  return "unknown";
}

inline std::string to_string(OutcomeModel model) {
  return model == OutcomeModel::linear ? "linear" : "nonlinear";
}

}  // namespace fedrule
