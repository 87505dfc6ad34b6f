#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "fedrule/data.hpp"
#include "fedrule/model.hpp"
#include "fedrule/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kBinary = FEDRULE_CLI_PATH;

struct Invocation {
  int exit_code = -1;
  std::string output;
};

fs::path sandbox() {
  const fs::path dir = fs::temp_directory_path() / "fedrule_cli_tests";
  fs::create_directories(dir);
  return dir;
}

Invocation run_cli(const std::string& args) {
  const std::string log = (sandbox() / "cli_test_output.log").string();
  const int status =
      std::system((kBinary + " " + args + " > " + log + " 2>&1").c_str());
  Invocation result;
  result.exit_code = WEXITSTATUS(status);
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  result.output = ss.str();
  return result;
}

std::string write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  out << j.dump(2);
  return path.string();
}

std::string write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  return path.string();
}

// Three small synthetic client CSVs with a shared schema.
std::vector<std::string> write_client_csvs(const fs::path& dir, std::uint64_t seed) {
  fedrule::ScenarioSpec spec;
  spec.n_clients = 3;
  spec.n_total = 240;
  spec.model = fedrule::OutcomeModel::linear;
  const auto [train, test] = fedrule::gen_scenario(spec, seed);

  std::vector<std::string> paths;
  for (std::size_t m = 0; m < train.n_clients(); ++m) {
    const auto& c = train.clients[m];
    std::ostringstream csv;
    for (const auto& name : c.feature_names) csv << name << ",";
    csv << "outcome\n";
    for (std::size_t i = 0; i < c.n_rows(); ++i) {
      for (std::size_t j = 0; j < c.n_features; ++j)
        csv << std::setprecision(17) << c.at(i, j) << ",";
      csv << c.outcomes[i] << "\n";
    }
    paths.push_back(
        write_text(dir / ("client_" + std::to_string(m) + ".csv"), csv.str()));
  }
  return paths;
}

json small_fed_config() {
  return json{{"n_trees", 20}, {"rounds", 40}, {"local_iters", 10}};
}

}  // namespace

TEST_CASE("simulate writes a results CSV and metadata", "[cli]") {
  const fs::path dir = sandbox();
  const auto config = write_json(
      dir / "sim.json",
      json{{"seed", 5},
           {"threads", 2},
           {"output_dir", (dir / "sim_out").string()},
           {"config", small_fed_config()},
           {"scenario", {{"kind", "client_count"}, {"m_clients", 2},
                         {"model", "linear"}, {"n_total", 200}}},
           {"replications", 2},
           {"methods", json::array({"federated", "centralized"})}});

  const auto run = run_cli("simulate --config " + config);
  INFO(run.output);
  REQUIRE(run.exit_code == 0);
  REQUIRE(fs::exists(dir / "sim_out" / "results.csv"));
  REQUIRE(fs::exists(dir / "sim_out" / "run_metadata.json"));

  std::ifstream in(dir / "sim_out" / "results.csv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  REQUIRE(rows == 1 + 2 * 2 * 7);  // header + methods x seeds x metrics

  std::ifstream meta_in(dir / "sim_out" / "run_metadata.json");
  json meta;
  meta_in >> meta;
  REQUIRE(meta["seed"] == 5);
  REQUIRE(meta["config"]["n_trees"] == 20);
  REQUIRE(meta["replication_seeds"].size() == 2);
}

TEST_CASE("malformed or invalid configs exit with code 2", "[cli]") {
  const fs::path dir = sandbox();
  SECTION("broken JSON") {
    const auto path = write_text(dir / "broken.json", "{ not json at all");
    const auto run = run_cli("simulate --config " + path);
    REQUIRE(run.exit_code == 2);
    REQUIRE(run.output.find("parse error") != std::string::npos);
  }
  SECTION("unknown top-level key") {
    const auto path = write_json(dir / "unknown.json",
                                 json{{"seed", 1}, {"bogus_key", true}});
    const auto run = run_cli("simulate --config " + path);
    REQUIRE(run.exit_code == 2);
    REQUIRE(run.output.find("bogus_key") != std::string::npos);
  }
  SECTION("invalid hyperparameter") {
    const auto path = write_json(
        dir / "badcfg.json",
        json{{"config", {{"epsilon", -1.0}}},
             {"scenario", {{"kind", "client_count"}, {"m_clients", 2}}}});
    const auto run = run_cli("simulate --config " + path);
    REQUIRE(run.exit_code == 2);
  }
  SECTION("missing config file") {
    const auto run = run_cli("simulate --config does_not_exist.json");
    REQUIRE(run.exit_code == 3);
  }
}

TEST_CASE("unwritable output directory exits with code 3", "[cli]") {
  const fs::path dir = sandbox();
  const auto blocker = write_text(dir / "blocker", "plain file");
  const auto config = write_json(
      dir / "sim3.json",
      json{{"config", small_fed_config()},
           {"scenario",
            {{"kind", "client_count"}, {"m_clients", 2}, {"n_total", 200}}},
           {"replications", 1}});
  // output dir nested under a regular file cannot be created
  const auto run =
      run_cli("simulate --config " + config + " --out " + blocker + "/nested");
  REQUIRE(run.exit_code == 3);
}

TEST_CASE("train, predict, and explain round trip on client CSVs", "[cli]") {
  const fs::path dir = sandbox();
  const auto clients = write_client_csvs(dir, 99);
  const fs::path out = dir / "train_out";

  json train_cfg{{"seed", 3},
                 {"output_dir", out.string()},
                 {"config", small_fed_config()},
                 {"clients", clients},
                 {"outcome_column", "outcome"},
                 {"top_rules", {{"k", 5}, {"min_support", 0.1}}}};
  const auto train_path = write_json(dir / "train.json", train_cfg);

  const auto trained = run_cli("train --config " + train_path);
  INFO(trained.output);
  REQUIRE(trained.exit_code == 0);
  REQUIRE(fs::exists(out / "model.json"));
  REQUIRE(fs::exists(out / "cutoffs.json"));
  REQUIRE(fs::exists(out / "importance.json"));
  REQUIRE(fs::exists(out / "importance.txt"));

  SECTION("predictions match in-process scoring bit-exactly") {
    const auto predict_cfg = write_json(
        dir / "predict.json",
        json{{"model", (out / "model.json").string()}, {"data", clients[0]}});
    const auto predicted =
        run_cli("predict --config " + predict_cfg + " --out " + (dir / "pred_out").string());
    INFO(predicted.output);
    REQUIRE(predicted.exit_code == 0);

    const auto model = fedrule::load_model((out / "model.json").string());
    const auto probe = fedrule::load_csv(clients[0], "outcome");
    std::ifstream in(dir / "pred_out" / "predictions.csv");
    std::string line;
    std::getline(in, line);
    REQUIRE(line == "row,probability");
    for (std::size_t i = 0; i < probe.n_rows(); ++i) {
      REQUIRE(std::getline(in, line));
      const auto comma = line.find(',');
      const double value = std::strtod(line.c_str() + comma + 1, nullptr);
      REQUIRE(value == model.predict_proba(probe.row(i), probe.n_features));
    }
  }
  SECTION("predict rejects data missing a model feature") {
    const auto bad_csv = write_text(dir / "missing_col.csv", "x1,x2\n1,2\n");
    const auto predict_cfg = write_json(
        dir / "predict_bad.json",
        json{{"model", (out / "model.json").string()}, {"data", bad_csv}});
    const auto run = run_cli("predict --config " + predict_cfg);
    REQUIRE(run.exit_code == 2);
    REQUIRE(run.output.find("x3") != std::string::npos);
  }
  SECTION("explain writes importance and subgroup rates") {
    json explain_cfg{{"model", (out / "model.json").string()},
                     {"clients", clients},
                     {"outcome_column", "outcome"},
                     {"top_rules", {{"k", 5}, {"min_support", 0.1}}}};
    const auto explain_path = write_json(dir / "explain.json", explain_cfg);
    const auto run = run_cli("explain --config " + explain_path + " --out " +
                             (dir / "explain_out").string());
    INFO(run.output);
    REQUIRE(run.exit_code == 0);
    std::ifstream in(dir / "explain_out" / "subgroup_rates.csv");
    std::string line;
    std::getline(in, line);
    REQUIRE(line == "rule,in_rate,out_rate,in_count,out_count");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    REQUIRE(rows <= 5);
  }
}

TEST_CASE("train can emit the solver trace", "[cli]") {
  const fs::path dir = sandbox();
  const auto clients = write_client_csvs(dir, 123);
  const fs::path out = dir / "trace_out";
  json cfg{{"output_dir", out.string()},
           {"config", small_fed_config()},
           {"clients", clients},
           {"outcome_column", "outcome"},
           {"trace", true}};
  const auto run = run_cli("train --config " + write_json(dir / "trace.json", cfg));
  INFO(run.output);
  REQUIRE(run.exit_code == 0);
  std::ifstream in(out / "fedda_trace.csv");
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "round,delta_norm,nnz");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  REQUIRE(rows == 40);  // one row per round
}

TEST_CASE("numeric failures exit with code 4", "[cli]") {
  const fs::path dir = sandbox();
  const auto clients = write_client_csvs(dir, 321);
  json cfg{{"output_dir", (dir / "blowup_out").string()},
           {"config", {{"eta_client", 1e9}, {"rounds", 10}, {"n_trees", 5}}},
           {"clients", clients},
           {"outcome_column", "outcome"}};
  const auto run = run_cli("train --config " + write_json(dir / "blowup.json", cfg));
  REQUIRE(run.exit_code == 4);
  REQUIRE(run.output.find("numeric error") != std::string::npos);
}

TEST_CASE("train rejects clients with mismatched schemas", "[cli]") {
  const fs::path dir = sandbox();
  const auto a = write_text(dir / "schema_a.csv", "x1,outcome\n1,0\n2,1\n");
  const auto b = write_text(dir / "schema_b.csv", "z9,outcome\n1,0\n2,1\n");
  const auto cfg = write_json(dir / "mismatch.json",
                              json{{"clients", json::array({a, b})},
                                   {"outcome_column", "outcome"}});
  const auto run = run_cli("train --config " + cfg);
  REQUIRE(run.exit_code == 2);
  REQUIRE(run.output.find("do not match") != std::string::npos);
}

TEST_CASE("sweep emits grid plus baseline rows", "[cli]") {
  const fs::path dir = sandbox();
  const auto config = write_json(
      dir / "sweep.json",
      json{{"seed", 4},
           {"threads", 2},
           {"output_dir", (dir / "sweep_out").string()},
           {"config", small_fed_config()},
           {"scenario",
            {{"kind", "client_count"}, {"m_clients", 2}, {"n_total", 200}}},
           {"replications", 1},
           {"sweep", {{"bins", json::array({50})}, {"quantiles", json::array({5, 20})}}}});
  const auto run = run_cli("sweep --config " + config);
  INFO(run.output);
  REQUIRE(run.exit_code == 0);

  std::ifstream in(dir / "sweep_out" / "sweep_results.csv");
  std::string line;
  std::size_t rows = 0;
  bool baseline_row = false;
  while (std::getline(in, line)) {
    ++rows;
    if (line.find(",0,0,0,") != std::string::npos) baseline_row = true;
  }
  REQUIRE(rows == 1 + 3 * 7);  // header + (2 cells + baseline) x metrics
  REQUIRE(baseline_row);
}
