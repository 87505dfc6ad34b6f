// fedrule command-line driver: synthetic-scenario simulation, federated
// training on client CSVs, prediction, interpretation, and the
// preprocessing sensitivity sweep.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fedrule/fedrule.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  unsigned threads = 0;
  bool no_dp_noise = false;
  std::uint64_t seed_override = 0;
  bool has_seed_override = false;
};

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw fedrule::io_error("cannot open config file: " + path);
  try {
    json j;
    in >> j;
    if (!j.is_object()) throw fedrule::config_error(path + ": config must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw fedrule::config_error(path + ": JSON parse error: " + e.what());
  }
}

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      throw fedrule::config_error(where + ": unknown key '" + key + "'");
}

fedrule::ScenarioSpec scenario_from_json(const json& j) {
  if (!j.is_object()) throw fedrule::config_error("scenario must be a JSON object");
  reject_unknown_keys(j, {"kind", "m_clients", "proportions", "model", "n_total",
                          "n_features"},
                      "scenario");
  fedrule::ScenarioSpec spec;
  try {
    const std::string kind = j.value("kind", std::string("client_count"));
    if (kind == "client_count") spec.kind = fedrule::ScenarioKind::client_count;
    else if (kind == "size_imbalance") spec.kind = fedrule::ScenarioKind::size_imbalance;
    else if (kind == "outcome_imbalance")
      spec.kind = fedrule::ScenarioKind::outcome_imbalance;
    else throw fedrule::config_error("scenario: unknown kind '" + kind + "'");

    spec.n_clients = j.value("m_clients", spec.n_clients);
    if (j.contains("proportions"))
      spec.proportions = j["proportions"].get<std::vector<double>>();
    const std::string model = j.value("model", std::string("linear"));
    if (model == "linear") spec.model = fedrule::OutcomeModel::linear;
    else if (model == "nonlinear") spec.model = fedrule::OutcomeModel::nonlinear;
    else throw fedrule::config_error("scenario: unknown model '" + model + "'");
    spec.n_total = j.value("n_total", spec.n_total);
    spec.n_features = j.value("n_features", spec.n_features);
  } catch (const json::exception& e) {
    throw fedrule::config_error(std::string("malformed scenario value: ") + e.what());
  }
  spec.validate();
  return spec;
}

json scenario_to_json(const fedrule::ScenarioSpec& spec) {
  return json{{"kind", fedrule::to_string(spec.kind)},
              {"m_clients", spec.n_clients},
              {"proportions", spec.proportions},
              {"model", fedrule::to_string(spec.model)},
              {"n_total", spec.n_total},
              {"n_features", spec.n_features}};
}

struct Flags {
  bool dp_noise = true;
  bool weighted_aggregation = false;
  bool rescale_importance = true;
};

Flags flags_from_json(const json& root) {
  Flags flags;
  if (!root.contains("flags")) return flags;
  const json& j = root["flags"];
  reject_unknown_keys(j, {"dp_noise", "weighted_aggregation", "rescale_importance"},
                      "flags");
  flags.dp_noise = j.value("dp_noise", flags.dp_noise);
  flags.weighted_aggregation = j.value("weighted_aggregation", flags.weighted_aggregation);
  flags.rescale_importance = j.value("rescale_importance", flags.rescale_importance);
  return flags;
}

// Resolved run setup shared by all subcommands.
struct Run {
  json raw;
  fedrule::FedConfig config;
  Flags flags;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  fs::path out_dir;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();
};

Run prepare_run(const CommonArgs& args, const std::set<std::string>& allowed_keys) {
  Run run;
  run.raw = load_config_file(args.config_path);
  std::set<std::string> allowed = allowed_keys;
  allowed.insert({"seed", "threads", "output_dir", "config", "flags"});
  reject_unknown_keys(run.raw, allowed, args.config_path);

  run.config = run.raw.contains("config")
                   ? fedrule::config_from_json(run.raw["config"])
                   : fedrule::FedConfig{};
  run.flags = flags_from_json(run.raw);
  run.seed = run.raw.value("seed", std::uint64_t{1});
  run.threads = run.raw.value("threads", 0u);

  if (args.has_seed_override) run.seed = args.seed_override;
  if (args.threads > 0) run.threads = args.threads;
  if (args.no_dp_noise) run.flags.dp_noise = false;
  run.config.rng_seed = run.seed;

  std::string out = run.raw.value("output_dir", std::string("."));
  if (!args.out_dir.empty()) out = args.out_dir;
  run.out_dir = out;
  std::error_code ec;
  fs::create_directories(run.out_dir, ec);
  return run;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw fedrule::io_error("cannot write to " + path.string());
  out << content;
  if (!out) throw fedrule::io_error("failed writing " + path.string());
}

void write_metadata(const Run& run, const std::string& command, const json& extra) {
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - run.started)
          .count();
  json meta{{"tool", "fedrule"},
            {"version", fedrule::kVersion},
            {"command", command},
            {"seed", run.seed},
            {"threads", run.threads},
            {"seconds_wall", seconds},
            {"config", fedrule::config_to_json(run.config)},
            {"flags",
             {{"dp_noise", run.flags.dp_noise},
              {"weighted_aggregation", run.flags.weighted_aggregation},
              {"rescale_importance", run.flags.rescale_importance}}}};
  meta.update(extra);
  write_file(run.out_dir / "run_metadata.json", meta.dump(2) + "\n");
}

std::vector<std::uint64_t> replication_seeds(std::uint64_t base, std::size_t count) {
  const fedrule::RngStream rng(base);
  std::vector<std::uint64_t> seeds;
  seeds.reserve(count);
  for (std::size_t r = 0; r < count; ++r)
    seeds.push_back(rng.derive("replication", r).seed());
  return seeds;
}

// --- train/explain shared ingestion ---------------------------------------

fedrule::ClientPartition load_clients(const json& raw, const std::string& config_path) {
  if (!raw.contains("clients"))
    throw fedrule::config_error(config_path + ": missing 'clients' list");
  const auto paths = raw["clients"].get<std::vector<std::string>>();
  if (paths.empty()) throw fedrule::config_error("'clients' must list at least one CSV");
  const std::string outcome = raw.value("outcome_column", std::string("outcome"));

  fedrule::ClientPartition part;
  for (const auto& path : paths) {
    part.clients.push_back(fedrule::load_csv(path, outcome));
    part.client_ids.push_back(fs::path(path).stem().string());
  }
  for (std::size_t m = 1; m < part.clients.size(); ++m)
    if (part.clients[m].feature_names != part.clients.front().feature_names)
      throw fedrule::data_error(paths[m] + ": covariate columns do not match " + paths[0]);
  part.validate();
  return part;
}

// Optional per-feature histogram ranges: {"feature": [low, high], ...}
std::vector<std::pair<double, double>> resolve_hist_ranges(
    const json& raw, const std::vector<std::string>& feature_names,
    const fedrule::FedConfig& config) {
  std::vector<std::pair<double, double>> ranges(
      feature_names.size(), {config.hist_range_low, config.hist_range_high});
  if (!raw.contains("hist_ranges")) return ranges;
  const json& j = raw["hist_ranges"];
  if (!j.is_object())
    throw fedrule::config_error("hist_ranges must map feature names to [low, high]");
  for (const auto& [name, value] : j.items()) {
    const auto it = std::find(feature_names.begin(), feature_names.end(), name);
    if (it == feature_names.end())
      throw fedrule::config_error("hist_ranges: unknown feature '" + name + "'");
    const auto pair = value.get<std::vector<double>>();
    if (pair.size() != 2 || !(pair[0] < pair[1]))
      throw fedrule::config_error("hist_ranges['" + name + "'] must be [low, high]");
    ranges[static_cast<std::size_t>(it - feature_names.begin())] = {pair[0], pair[1]};
  }
  return ranges;
}

std::string subgroup_csv(const fedrule::RuleFitModel& model,
                         const fedrule::ImportanceReport& report,
                         const fedrule::ClientPartition& part, std::size_t top_k,
                         double min_support) {
  std::string out = "rule,in_rate,out_rate,in_count,out_count\n";
  char buf[512];
  for (const auto& entry : fedrule::top_rules(report, top_k, min_support)) {
    const auto rates = fedrule::subgroup_rates(model.rules.rules[entry.index], part);
    std::string in_rate = rates.in_rate ? fedrule::format_value(*rates.in_rate) : "";
    std::string out_rate = rates.out_rate ? fedrule::format_value(*rates.out_rate) : "";
    std::snprintf(buf, sizeof(buf), "\"%s\",%s,%s,%zu,%zu\n", entry.display.c_str(),
                  in_rate.c_str(), out_rate.c_str(), rates.in_count, rates.out_count);
    out += buf;
  }
  return out;
}

// --- subcommands ------------------------------------------------------------

int cmd_simulate(const CommonArgs& args) {
  Run run = prepare_run(args, {"scenario", "replications", "methods"});
  if (!run.raw.contains("scenario"))
    throw fedrule::config_error(args.config_path + ": simulate needs a 'scenario'");
  const fedrule::ScenarioSpec scenario = scenario_from_json(run.raw["scenario"]);
  const std::size_t replications = run.raw.value("replications", std::size_t{20});
  if (replications < 1) throw fedrule::config_error("replications must be >= 1");

  std::vector<fedrule::Method> methods;
  if (run.raw.contains("methods"))
    for (const auto& m : run.raw["methods"])
      methods.push_back(fedrule::method_from_string(m.get<std::string>()));
  else
    methods = {fedrule::Method::federated, fedrule::Method::centralized,
               fedrule::Method::local};

  fedrule::HarnessOptions options;
  options.dp_noise = run.flags.dp_noise;
  options.centralized_dp_noise = run.flags.dp_noise;
  options.weighted_aggregation = run.flags.weighted_aggregation;

  const auto seeds = replication_seeds(run.seed, replications);
  const auto results = fedrule::run_replications(methods, scenario, run.config, seeds,
                                                 options, run.threads);
  write_file(run.out_dir / "results.csv", fedrule::results_to_csv(results));

  json summary = json::object();
  for (const auto method : methods) {
    std::vector<fedrule::RunResult> mine;
    for (const auto& r : results)
      if (r.method == fedrule::to_string(method)) mine.push_back(r);
    json per_metric = json::object();
    const std::pair<const char*, std::function<double(const fedrule::RunResult&)>>
        metrics[] = {{"auc", [](const auto& r) { return r.auc; }},
                     {"accuracy", [](const auto& r) { return r.accuracy; }},
                     {"f1", [](const auto& r) { return r.f1; }}};
    for (const auto& [name, pick] : metrics) {
      const auto s = fedrule::summarize_metric(mine, pick);
      per_metric[name] = {{"mean", s.mean}, {"sd", s.sd}};
      if (std::string(name) == "auc")
        std::printf("  %-12s auc %.3f +- %.3f over %zu replications\n",
                    fedrule::to_string(method).c_str(), s.mean, s.sd, mine.size());
    }
    summary[fedrule::to_string(method)] = per_metric;
  }

  write_metadata(run, "simulate",
                 json{{"scenario", scenario_to_json(scenario)},
                      {"replications", replications},
                      {"replication_seeds", seeds},
                      {"summary", summary}});
  std::cout << "simulate: wrote " << results.size() << " runs to "
            << (run.out_dir / "results.csv").string() << "\n";
  return 0;
}

int cmd_sweep(const CommonArgs& args) {
  Run run = prepare_run(args, {"scenario", "replications", "sweep"});
  if (!run.raw.contains("scenario"))
    throw fedrule::config_error(args.config_path + ": sweep needs a 'scenario'");
  const fedrule::ScenarioSpec scenario = scenario_from_json(run.raw["scenario"]);
  const std::size_t replications = run.raw.value("replications", std::size_t{20});

  std::vector<int> bins{100};
  std::vector<int> quantiles{5, 10, 20, 50};
  if (run.raw.contains("sweep")) {
    const json& j = run.raw["sweep"];
    reject_unknown_keys(j, {"bins", "quantiles"}, "sweep");
    if (j.contains("bins")) bins = j["bins"].get<std::vector<int>>();
    if (j.contains("quantiles")) quantiles = j["quantiles"].get<std::vector<int>>();
  }

  fedrule::HarnessOptions options;
  options.dp_noise = run.flags.dp_noise;
  options.weighted_aggregation = run.flags.weighted_aggregation;

  const auto seeds = replication_seeds(run.seed, replications);
  const auto results = fedrule::sweep_preprocess(bins, quantiles, scenario, run.config,
                                                 seeds, options, run.threads);
  write_file(run.out_dir / "sweep_results.csv", fedrule::results_to_csv(results));
  write_metadata(run, "sweep",
                 json{{"scenario", scenario_to_json(scenario)},
                      {"replications", replications},
                      {"bins", bins},
                      {"quantiles", quantiles},
                      {"replication_seeds", seeds}});
  std::cout << "sweep: wrote " << results.size() << " runs to "
            << (run.out_dir / "sweep_results.csv").string() << "\n";
  return 0;
}

int cmd_train(const CommonArgs& args) {
  Run run = prepare_run(args,
                        {"clients", "outcome_column", "hist_ranges", "top_rules", "trace"});
  const fedrule::ClientPartition part = load_clients(run.raw, args.config_path);
  const auto ranges =
      resolve_hist_ranges(run.raw, part.clients.front().feature_names, run.config);

  fedrule::TrainOptions options;
  options.dp_noise = run.flags.dp_noise;
  options.weighted_aggregation = run.flags.weighted_aggregation;
  options.hist_ranges = &ranges;
  std::vector<fedrule::SolveTraceRow> trace;
  if (run.raw.value("trace", false)) options.trace = &trace;

  fedrule::TrainDiagnostics diag;
  const fedrule::RuleFitModel model = fedrule::train(part, run.config, options, &diag);
  fedrule::save_model(model, (run.out_dir / "model.json").string());
  write_file(run.out_dir / "cutoffs.json",
             fedrule::cutoffs_to_json(diag.cutoffs, model.feature_names).dump(2) + "\n");

  if (options.trace) {
    std::string csv = "round,delta_norm,nnz\n";
    char buf[96];
    for (const auto& row : trace) {
      std::snprintf(buf, sizeof(buf), "%d,%.17g,%zu\n", row.round, row.delta_norm,
                    row.nnz);
      csv += buf;
    }
    write_file(run.out_dir / "fedda_trace.csv", csv);
  }

  const auto report = fedrule::base_importance(model, part, run.flags.rescale_importance);
  std::size_t top_k = 5;
  double min_support = 0.1;
  if (run.raw.contains("top_rules")) {
    const json& j = run.raw["top_rules"];
    reject_unknown_keys(j, {"k", "min_support"}, "top_rules");
    top_k = j.value("k", top_k);
    min_support = j.value("min_support", min_support);
  }
  write_file(run.out_dir / "importance.json",
             fedrule::report_to_json(report).dump(2) + "\n");
  write_file(run.out_dir / "importance.txt",
             fedrule::report_to_table(report, top_k, min_support));
  write_metadata(run, "train",
                 json{{"clients", run.raw["clients"]},
                      {"rules_before_dedup", diag.rules_before_dedup},
                      {"rules_after_dedup", diag.rules_after_dedup},
                      {"seconds_rulegen", diag.seconds_rulegen},
                      {"seconds_ensemble", diag.seconds_ensemble}});
  std::cout << "train: " << model.rules.size() << " rules ("
            << diag.rules_before_dedup << " before dedup), model written to "
            << (run.out_dir / "model.json").string() << "\n";
  return 0;
}

int cmd_predict(const CommonArgs& args) {
  Run run = prepare_run(args, {"model", "data"});
  if (!run.raw.contains("model") || !run.raw.contains("data"))
    throw fedrule::config_error(args.config_path + ": predict needs 'model' and 'data'");
  const fedrule::RuleFitModel model =
      fedrule::load_model(run.raw["model"].get<std::string>());
  const fedrule::CsvTable table =
      fedrule::read_numeric_csv(run.raw["data"].get<std::string>());

  // map model features onto CSV columns by name
  std::vector<std::size_t> column_of;
  for (const auto& name : model.feature_names) {
    const auto it = std::find(table.header.begin(), table.header.end(), name);
    if (it == table.header.end())
      throw fedrule::data_error("prediction data is missing feature column '" + name + "'");
    column_of.push_back(static_cast<std::size_t>(it - table.header.begin()));
  }

  std::string out = "row,probability\n";
  char buf[64];
  std::vector<double> x(model.n_features());
  for (std::size_t i = 0; i < table.n_rows(); ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = table.at(i, column_of[j]);
    std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", i + 1, model.predict_proba(x));
    out += buf;
  }
  write_file(run.out_dir / "predictions.csv", out);
  std::cout << "predict: wrote " << table.n_rows() << " probabilities to "
            << (run.out_dir / "predictions.csv").string() << "\n";
  return 0;
}

int cmd_explain(const CommonArgs& args) {
  Run run = prepare_run(args, {"model", "clients", "outcome_column", "top_rules"});
  if (!run.raw.contains("model"))
    throw fedrule::config_error(args.config_path + ": explain needs a 'model'");
  const fedrule::RuleFitModel model =
      fedrule::load_model(run.raw["model"].get<std::string>());
  const fedrule::ClientPartition part = load_clients(run.raw, args.config_path);

  std::size_t top_k = 5;
  double min_support = 0.1;
  if (run.raw.contains("top_rules")) {
    const json& j = run.raw["top_rules"];
    reject_unknown_keys(j, {"k", "min_support"}, "top_rules");
    top_k = j.value("k", top_k);
    min_support = j.value("min_support", min_support);
  }

  const auto report = fedrule::base_importance(model, part, run.flags.rescale_importance);
  write_file(run.out_dir / "importance.json",
             fedrule::report_to_json(report).dump(2) + "\n");
  write_file(run.out_dir / "importance.txt",
             fedrule::report_to_table(report, top_k, min_support));
  write_file(run.out_dir / "subgroup_rates.csv",
             subgroup_csv(model, report, part, top_k, min_support));
  write_metadata(run, "explain", json{{"model", run.raw["model"]}});
  std::cout << "explain: wrote importance report and subgroup rates to "
            << run.out_dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedrule: federated rule-ensemble models over horizontal data splits"};
  app.require_subcommand(1);

  CommonArgs args;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", args.config_path, "JSON run configuration")->required();
    cmd->add_option("--out", args.out_dir, "output directory (overrides config)");
    cmd->add_option("--threads", args.threads, "worker thread count");
    cmd->add_flag("--no-dp-noise", args.no_dp_noise,
                  "disable Laplace noise in preprocessing (testing only)");
    cmd->add_option("--seed", args.seed_override, "seed override")
        ->each([&](const std::string&) { args.has_seed_override = true; });
  };

  CLI::App* simulate = app.add_subcommand("simulate", "run a synthetic scenario comparison");
  CLI::App* train = app.add_subcommand("train", "train a federated model on client CSVs");
  CLI::App* predict = app.add_subcommand("predict", "score a CSV with a trained model");
  CLI::App* explain = app.add_subcommand("explain", "importance report and subgroup rates");
  CLI::App* sweep = app.add_subcommand("sweep", "preprocessing sensitivity grid");
  for (CLI::App* cmd : {simulate, train, predict, explain, sweep}) add_common(cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (simulate->parsed()) return cmd_simulate(args);
    if (train->parsed()) return cmd_train(args);
    if (predict->parsed()) return cmd_predict(args);
    if (explain->parsed()) return cmd_explain(args);
    if (sweep->parsed()) return cmd_sweep(args);
  } catch (const fedrule::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const fedrule::data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const fedrule::io_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const fedrule::numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
