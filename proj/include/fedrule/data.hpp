#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fedrule/errors.hpp"
#include "fedrule/random.hpp"

namespace fedrule {

// Binary-outcome dataset: N rows of (y in {0,1}, p real covariates).
// Immutable after construction; shared read-only across client workers.
struct Dataset {
  std::vector<int> outcomes;
  std::vector<double> covariates;  // row-major N x p
  std::size_t n_features = 0;
  std::vector<std::string> feature_names;

  std::size_t n_rows() const { return outcomes.size(); }

  double at(std::size_t row, std::size_t col) const {
    return covariates[row * n_features + col];
  }

  const double* row(std::size_t i) const {
    return covariates.data() + i * n_features;
  }

  void validate() const {
    if (n_features < 1) throw data_error("dataset needs at least one covariate");
    if (feature_names.size() != n_features)
      throw data_error("feature_names length does not match covariate count");
    if (covariates.size() != outcomes.size() * n_features)
      throw data_error("covariate matrix shape does not match outcome count");
    for (int y : outcomes)
      if (y != 0 && y != 1) throw data_error("outcomes must be 0 or 1");
    for (double v : covariates)
      if (!std::isfinite(v)) throw data_error("covariates must be finite");
  }
};

// Horizontal federation: M clients over the same feature space.
struct ClientPartition {
  std::vector<Dataset> clients;
  std::vector<std::string> client_ids;

  std::size_t n_clients() const { return clients.size(); }

  std::size_t n_features() const {
    return clients.empty() ? 0 : clients.front().n_features;
  }

  std::size_t total_rows() const {
    std::size_t n = 0;
    for (const auto& c : clients) n += c.n_rows();
    return n;
  }

  void validate() const {
    if (clients.empty()) throw data_error("partition needs at least one client");
    if (client_ids.size() != clients.size())
      throw data_error("client_ids length does not match client count");
    const auto& names = clients.front().feature_names;
    for (const auto& c : clients) {
      c.validate();
      if (c.n_rows() < 1) throw data_error("every client needs at least one row");
      if (c.feature_names != names)
        throw data_error("clients must share identical feature names");
    }
  }
};

// Hyperparameters for the full pipeline. Defaults follow the reference
// configuration: 333 stump-depth trees with shrinkage 0.01, per-histogram
// privacy budget 1, and the dual-averaging schedule (1, 0.01, 300, 20).
struct FedConfig {
  int n_trees = 333;
  double mean_depth = 2.0;   // expected terminal nodes; 2 = stumps only
  double shrinkage = 0.01;
  double epsilon = 1.0;      // privacy budget per histogram
  int n_bins = 100;
  int n_quantiles = 20;
  double lambda = 0.01;
  double eta_server = 1.0;
  double eta_client = 0.01;
  int rounds = 300;
  int local_iters = 20;
  double winsor_q = 0.025;
  // Fraction of local rows each tree trains on (without replacement). The
  // random subsamples diversify the greedy split choices the way rule
  // ensembles conventionally do; 1.0 fits every tree on the full local data.
  double subsample = 0.5;
  std::uint64_t rng_seed = 0;

  // Public prior range for the shared histograms; per-feature overrides may
  // replace it. Picking the range from data would itself leak, so the default
  // assumes roughly standardized covariates.
  double hist_range_low = -6.0;
  double hist_range_high = 6.0;

  void validate() const {
    if (n_trees < 1) throw config_error("n_trees must be >= 1");
    if (!(mean_depth >= 2.0)) throw config_error("mean_depth must be >= 2");
    if (!(shrinkage > 0.0) || shrinkage > 1.0)
      throw config_error("shrinkage must be in (0, 1]");
    if (!(epsilon > 0.0)) throw config_error("epsilon must be > 0");
    if (n_bins < 2) throw config_error("n_bins must be >= 2");
    if (n_quantiles < 1) throw config_error("n_quantiles must be >= 1");
    if (!(lambda >= 0.0)) throw config_error("lambda must be >= 0");
    if (!(eta_server > 0.0)) throw config_error("eta_server must be > 0");
    if (!(eta_client > 0.0)) throw config_error("eta_client must be > 0");
    if (rounds < 1) throw config_error("rounds must be >= 1");
    if (local_iters < 1) throw config_error("local_iters must be >= 1");
    if (!(winsor_q > 0.0 && winsor_q < 0.5))
      throw config_error("winsor_q must be in (0, 0.5)");
    if (!(subsample > 0.0) || subsample > 1.0)
      throw config_error("subsample must be in (0, 1]");
    if (!(hist_range_low < hist_range_high))
      throw config_error("histogram range must satisfy low < high");
  }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline bool parse_number(const std::string& raw, double& out) {
  const std::string s = trim(raw);
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

}  // namespace detail

// Raw numeric CSV: header row plus an all-numeric body.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<double> values;  // row-major n_rows x header.size()

  std::size_t n_rows() const {
    return header.empty() ? 0 : values.size() / header.size();
  }

  double at(std::size_t row, std::size_t col) const {
    return values[row * header.size() + col];
  }
};

// CSV ingestion: header row required, comma-separated, decimal point.
// Missing or non-numeric cells are rejected, never imputed.
inline CsvTable read_numeric_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw data_error(path + ": empty file");
  CsvTable table;
  for (const auto& cell : detail::split_csv_line(line))
    table.header.push_back(detail::trim(cell));

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != table.header.size())
      throw data_error(path + ": row " + std::to_string(row) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(table.header.size()));
    for (std::size_t j = 0; j < cells.size(); ++j) {
      double v = 0.0;
      if (!detail::parse_number(cells[j], v))
        throw data_error(path + ": row " + std::to_string(row) + ", column '" +
                         table.header[j] + "': non-numeric or missing value '" +
                         detail::trim(cells[j]) + "'");
      table.values.push_back(v);
    }
  }
  if (table.n_rows() == 0) throw data_error(path + ": no data rows");
  return table;
}

inline Dataset load_csv(const std::string& path, const std::string& outcome_column) {
  const CsvTable table = read_numeric_csv(path);

  std::ptrdiff_t outcome_idx = -1;
  Dataset ds;
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    if (table.header[j] == outcome_column) {
      if (outcome_idx >= 0)
        throw data_error(path + ": duplicate outcome column '" + outcome_column + "'");
      outcome_idx = static_cast<std::ptrdiff_t>(j);
    } else {
      ds.feature_names.push_back(table.header[j]);
    }
  }
  if (outcome_idx < 0)
    throw data_error(path + ": outcome column '" + outcome_column + "' not found");
  ds.n_features = ds.feature_names.size();
  if (ds.n_features < 1)
    throw data_error(path + ": no covariate columns besides the outcome");

  for (std::size_t i = 0; i < table.n_rows(); ++i) {
    for (std::size_t j = 0; j < table.header.size(); ++j) {
      const double v = table.at(i, j);
      if (static_cast<std::ptrdiff_t>(j) == outcome_idx) {
        if (v != 0.0 && v != 1.0)
          throw data_error(path + ": row " + std::to_string(i + 1) +
                           ": outcome must be 0 or 1, got " + std::to_string(v));
        ds.outcomes.push_back(static_cast<int>(v));
      } else {
        ds.covariates.push_back(v);
      }
    }
  }
  ds.validate();
  return ds;
}

// Disjoint split of a dataset into M clients. Client m receives
// round(proportion_m * N) rows; rounding remainder goes to the last client.
// Row assignment is a seed-driven shuffle, deterministic given (data, seed).
inline ClientPartition partition(const Dataset& data,
                                 const std::vector<double>& proportions,
                                 std::uint64_t seed) {
  data.validate();
  if (proportions.empty()) throw config_error("proportions must be non-empty");
  double total = 0.0;
  for (double p : proportions) {
    if (!(p > 0.0)) throw config_error("every proportion must be > 0");
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-9)
    throw config_error("proportions must sum to 1");

  const std::size_t n = data.n_rows();
  const std::size_t m_clients = proportions.size();
  std::vector<std::size_t> sizes(m_clients);
  std::size_t assigned = 0;
  for (std::size_t m = 0; m + 1 < m_clients; ++m) {
    sizes[m] = static_cast<std::size_t>(std::llround(proportions[m] * static_cast<double>(n)));
    assigned += sizes[m];
  }
  if (assigned > n) throw config_error("proportions over-assign rows");
  sizes[m_clients - 1] = n - assigned;
  for (std::size_t m = 0; m < m_clients; ++m)
    if (sizes[m] == 0)
      throw config_error("client " + std::to_string(m + 1) + " would receive 0 rows");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  RngStream rng(seed);
  // Fisher-Yates on our own uniform draws so the shuffle is engine-stable.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(order[i - 1], order[j]);
  }

  ClientPartition part;
  std::size_t offset = 0;
  for (std::size_t m = 0; m < m_clients; ++m) {
    Dataset c;
    c.n_features = data.n_features;
    c.feature_names = data.feature_names;
    c.outcomes.reserve(sizes[m]);
    c.covariates.reserve(sizes[m] * data.n_features);
    for (std::size_t k = 0; k < sizes[m]; ++k) {
      const std::size_t src = order[offset + k];
      c.outcomes.push_back(data.outcomes[src]);
      const double* r = data.row(src);
      c.covariates.insert(c.covariates.end(), r, r + data.n_features);
    }
    offset += sizes[m];
    part.clients.push_back(std::move(c));
    part.client_ids.push_back("client_" + std::to_string(m + 1));
  }
  part.validate();
  return part;
}

// Concatenate all clients (in client order) back into one dataset.
inline Dataset pool(const ClientPartition& part) {
  part.validate();
  Dataset out;
  out.n_features = part.n_features();
  out.feature_names = part.clients.front().feature_names;
  for (const auto& c : part.clients) {
    out.outcomes.insert(out.outcomes.end(), c.outcomes.begin(), c.outcomes.end());
    out.covariates.insert(out.covariates.end(), c.covariates.begin(), c.covariates.end());
  }
  return out;
}

// Wrap a single dataset as a one-client partition.
inline ClientPartition as_single_client(Dataset data, const std::string& id = "client_1") {
  ClientPartition part;
  part.clients.push_back(std::move(data));
  part.client_ids.push_back(id);
  part.validate();
  return part;
}

}  // namespace fedrule
