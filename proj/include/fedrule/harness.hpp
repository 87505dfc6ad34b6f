#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "fedrule/data.hpp"
#include "fedrule/metrics.hpp"
#include "fedrule/model.hpp"
#include "fedrule/pipeline.hpp"
#include "fedrule/synth.hpp"

namespace fedrule {

enum class Method { federated, centralized, local };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::federated: return "federated";
    case Method::centralized: return "centralized";
    case Method::local: return "local";
  }
  return "unknown";
}

inline Method method_from_string(const std::string& s) {
  if (s == "federated") return Method::federated;
  if (s == "centralized") return Method::centralized;
  if (s == "local") return Method::local;
  throw config_error("unknown method '" + s + "'");
}

// One evaluated training run. For the local baseline, metrics and rule
// counts are averages across the per-client models.
struct RunResult {
  std::string method;
  ScenarioSpec scenario;
  std::uint64_t seed = 0;
  double auc = 0.0;
  double accuracy = 0.0;
  double f1 = 0.0;
  double rule_count = 0.0;
  double seconds_total = 0.0;
  double seconds_rulegen = 0.0;
  double seconds_ensemble = 0.0;
  int n_bins = 0;
  int n_quantiles = 0;
  bool preprocess = true;
};

struct HarnessOptions {
  bool dp_noise = true;
  bool centralized_dp_noise = true;  // allow noise-free centralized reference
  bool preprocess = true;
  bool weighted_aggregation = false;
};

namespace detail {

struct EvalData {
  std::vector<double> scores;
  std::vector<int> labels;
};

inline EvalData evaluate_model(const RuleFitModel& model, const Dataset& test) {
  EvalData eval;
  eval.labels = test.outcomes;
  eval.scores.resize(test.n_rows());
  for (std::size_t i = 0; i < test.n_rows(); ++i)
    eval.scores[i] = model.predict_proba(test.row(i), test.n_features);
  return eval;
}

inline void fill_metrics(RunResult& result, const EvalData& eval) {
  result.auc = auc(eval.scores, eval.labels);
  const auto [acc, f1] = accuracy_f1(eval.scores, eval.labels);
  result.accuracy = acc;
  result.f1 = f1;
}

}  // namespace detail

// Train one method on a scenario replication and evaluate on the pooled test
// set. The scenario data depend only on (spec, seed), so different methods
// at the same seed see identical data: comparisons are paired.
inline RunResult run_method(Method method, const ScenarioSpec& scenario,
                            const FedConfig& config, std::uint64_t seed,
                            const HarnessOptions& options = {}) {
  scenario.validate();
  config.validate();
  const RngStream rng(seed);
  const auto [train_part, test_part] = gen_scenario(scenario, rng.derive("scenario").seed());
  const Dataset test = pool(test_part);

  FedConfig run_config = config;
  run_config.rng_seed = rng.derive("pipeline").seed();

  RunResult result;
  result.method = to_string(method);
  result.scenario = scenario;
  result.seed = seed;
  result.n_bins = config.n_bins;
  result.n_quantiles = config.n_quantiles;
  result.preprocess = options.preprocess;

  TrainOptions train_options;
  train_options.preprocess = options.preprocess;
  train_options.weighted_aggregation = options.weighted_aggregation;

  const auto start = std::chrono::steady_clock::now();
  if (method == Method::federated || method == Method::centralized) {
    train_options.dp_noise =
        method == Method::centralized ? options.centralized_dp_noise : options.dp_noise;
    const ClientPartition* part = &train_part;
    ClientPartition pooled_part;
    if (method == Method::centralized) {
      pooled_part = as_single_client(pool(train_part));
      part = &pooled_part;
    }
    TrainDiagnostics diag;
    const RuleFitModel model = train(*part, run_config, train_options, &diag);
    detail::fill_metrics(result, detail::evaluate_model(model, test));
    result.rule_count = static_cast<double>(model.rules.size());
    result.seconds_rulegen = diag.seconds_rulegen;
    result.seconds_ensemble = diag.seconds_ensemble;
  } else {
    // Non-collaborative baseline: independent per-client pipelines, metrics
    // averaged across clients.
    train_options.dp_noise = options.dp_noise;
    const std::size_t m_clients = train_part.n_clients();
    for (std::size_t m = 0; m < m_clients; ++m) {
      ClientPartition solo;
      solo.clients.push_back(train_part.clients[m]);
      solo.client_ids.push_back(train_part.client_ids[m]);
      TrainDiagnostics diag;
      const RuleFitModel model = train(solo, run_config, train_options, &diag);
      RunResult one;
      detail::fill_metrics(one, detail::evaluate_model(model, test));
      result.auc += one.auc / static_cast<double>(m_clients);
      result.accuracy += one.accuracy / static_cast<double>(m_clients);
      result.f1 += one.f1 / static_cast<double>(m_clients);
      result.rule_count +=
          static_cast<double>(model.rules.size()) / static_cast<double>(m_clients);
      result.seconds_rulegen += diag.seconds_rulegen;
      result.seconds_ensemble += diag.seconds_ensemble;
    }
  }
  result.seconds_total = detail::seconds_since(start);
  return result;
}

// Run `jobs` indexed tasks on up to `threads` workers. Each task writes only
// its own output slot, so results are deterministic regardless of schedule.
inline void run_jobs(std::size_t jobs, unsigned threads,
                     const std::function<void(std::size_t)>& task) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, jobs == 0 ? 1 : static_cast<unsigned>(jobs));
  if (threads <= 1) {
    for (std::size_t i = 0; i < jobs; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (unsigned t = 0; t < threads; ++t)
    workers.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < jobs; i = next.fetch_add(1)) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

// Replicated comparison: every method runs on every seed, results ordered by
// (method, seed).
inline std::vector<RunResult> run_replications(const std::vector<Method>& methods,
                                               const ScenarioSpec& scenario,
                                               const FedConfig& config,
                                               const std::vector<std::uint64_t>& seeds,
                                               const HarnessOptions& options = {},
                                               unsigned threads = 0) {
  std::vector<RunResult> results(methods.size() * seeds.size());
  run_jobs(results.size(), threads, [&](std::size_t idx) {
    const std::size_t mi = idx / seeds.size();
    const std::size_t si = idx % seeds.size();
    results[idx] = run_method(methods[mi], scenario, config, seeds[si], options);
  });
  return results;
}

// Preprocessing sensitivity sweep: federated runs over a (bins x quantiles)
// grid plus a no-preprocessing baseline per seed (recorded with bins and
// quantiles 0).
inline std::vector<RunResult> sweep_preprocess(const std::vector<int>& bins_grid,
                                               const std::vector<int>& quantile_grid,
                                               const ScenarioSpec& scenario,
                                               const FedConfig& config,
                                               const std::vector<std::uint64_t>& seeds,
                                               const HarnessOptions& options = {},
                                               unsigned threads = 0) {
  if (bins_grid.empty() || quantile_grid.empty())
    throw config_error("sweep grids must be non-empty");
  struct Cell {
    int bins = 0, quantiles = 0;
    bool preprocess = true;
  };
  std::vector<Cell> cells;
  for (int b : bins_grid)
    for (int q : quantile_grid) cells.push_back({b, q, true});
  cells.push_back({0, 0, false});

  std::vector<RunResult> results(cells.size() * seeds.size());
  run_jobs(results.size(), threads, [&](std::size_t idx) {
    const Cell& cell = cells[idx / seeds.size()];
    const std::uint64_t seed = seeds[idx % seeds.size()];
    FedConfig cell_config = config;
    HarnessOptions cell_options = options;
    cell_options.preprocess = cell.preprocess;
    if (cell.preprocess) {
      cell_config.n_bins = cell.bins;
      cell_config.n_quantiles = cell.quantiles;
    }
    RunResult r = run_method(Method::federated, scenario, cell_config, seed, cell_options);
    r.n_bins = cell.bins;
    r.n_quantiles = cell.quantiles;
    results[idx] = r;
  });
  return results;
}

// Tidy CSV: one row per run and metric.
inline std::string results_to_csv(const std::vector<RunResult>& results) {
  std::string out =
      "method,scenario,model,m_clients,proportions,n_bins,n_quantiles,preprocess,"
      "seed,metric,value\n";
  char buf[512];
  for (const auto& r : results) {
    std::string props;
    for (double p : r.scenario.size_shares()) {
      if (!props.empty()) props += ';';
      props += format_value(p);
    }
    const std::pair<const char*, double> metrics[] = {
        {"auc", r.auc},
        {"accuracy", r.accuracy},
        {"f1", r.f1},
        {"rule_count", r.rule_count},
        {"seconds_total", r.seconds_total},
        {"seconds_rulegen", r.seconds_rulegen},
        {"seconds_ensemble", r.seconds_ensemble}};
    for (const auto& [name, value] : metrics) {
      std::snprintf(buf, sizeof(buf), "%s,%s,%s,%zu,%s,%d,%d,%d,%llu,%s,%.17g\n",
                    r.method.c_str(), to_string(r.scenario.kind).c_str(),
                    to_string(r.scenario.model).c_str(), r.scenario.n_clients,
                    props.c_str(), r.n_bins, r.n_quantiles, r.preprocess ? 1 : 0,
                    static_cast<unsigned long long>(r.seed), name, value);
      out += buf;
    }
  }
  return out;
}

inline double mean_metric(const std::vector<RunResult>& results,
                          const std::function<double(const RunResult&)>& pick) {
  if (results.empty()) throw data_error("no results to summarize");
  double sum = 0.0;
  for (const auto& r : results) sum += pick(r);
  return sum / static_cast<double>(results.size());
}

struct MetricSummary {
  double mean = 0.0;
  double sd = 0.0;  // sample SD across replications; 0 for a single run
};

inline MetricSummary summarize_metric(const std::vector<RunResult>& results,
                                      const std::function<double(const RunResult&)>& pick) {
  MetricSummary s;
  s.mean = mean_metric(results, pick);
  if (results.size() < 2) return s;
  double ss = 0.0;
  for (const auto& r : results) {
    const double d = pick(r) - s.mean;
    ss += d * d;
  }
  s.sd = std::sqrt(ss / static_cast<double>(results.size() - 1));
  return s;
}

}  // namespace fedrule
