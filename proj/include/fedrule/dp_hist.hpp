#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "fedrule/data.hpp"
#include "fedrule/errors.hpp"
#include "fedrule/random.hpp"

namespace fedrule {

// Shared histogram geometry: B bins over strictly increasing edges.
struct HistogramSpec {
  std::vector<double> bin_edges;  // B+1 edges

  std::size_t n_bins() const { return bin_edges.empty() ? 0 : bin_edges.size() - 1; }

  void validate() const {
    if (n_bins() < 2) throw config_error("histogram needs at least 2 bins");
    for (std::size_t b = 1; b < bin_edges.size(); ++b)
      if (!(bin_edges[b - 1] < bin_edges[b]))
        throw config_error("histogram edges must be strictly increasing");
  }

  static HistogramSpec uniform(double lo, double hi, std::size_t n_bins) {
    if (!(lo < hi)) throw config_error("histogram range must satisfy low < high");
    HistogramSpec spec;
    spec.bin_edges.resize(n_bins + 1);
    for (std::size_t b = 0; b <= n_bins; ++b)
      spec.bin_edges[b] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(n_bins);
    spec.validate();
    return spec;
  }
};

// Per-client bin counts after Laplace perturbation (may be negative).
struct NoisyHistogram {
  std::vector<double> counts;
  std::string client_id;
};

// Shared per-covariate cutoff candidates, sorted and deduplicated.
struct CutoffSet {
  std::vector<std::vector<double>> per_covariate;

  std::size_t n_covariates() const { return per_covariate.size(); }

  bool all_empty() const {
    for (const auto& c : per_covariate)
      if (!c.empty()) return false;
    return true;
  }
};

// One draw from Lap(0, scale). scale = 0 disables the mechanism (test mode).
inline double laplace_noise(double scale, RngStream& rng) {
  if (scale == 0.0) return 0.0;
  return rng.laplace(scale);
}

// Bin counts for one client's covariate column with per-bin Laplace noise of
// scale 1/epsilon (counting-query sensitivity 1). Values outside the edge
// range are clamped into the first/last bin. epsilon = +inf disables noise.
inline NoisyHistogram local_histogram(const std::vector<double>& values,
                                      const HistogramSpec& spec, double epsilon,
                                      RngStream& rng,
                                      const std::string& client_id = "") {
  spec.validate();
  if (!(epsilon > 0.0)) throw config_error("epsilon must be > 0");
  const std::size_t n_bins = spec.n_bins();
  NoisyHistogram hist;
  hist.client_id = client_id;
  hist.counts.assign(n_bins, 0.0);
  for (double v : values) {
    // first edge strictly above v, minus one = containing bin
    auto it = std::upper_bound(spec.bin_edges.begin(), spec.bin_edges.end(), v);
    std::ptrdiff_t b = (it - spec.bin_edges.begin()) - 1;
    if (b < 0) b = 0;
    if (b >= static_cast<std::ptrdiff_t>(n_bins)) b = static_cast<std::ptrdiff_t>(n_bins) - 1;
    hist.counts[static_cast<std::size_t>(b)] += 1.0;
  }
  const double scale = std::isinf(epsilon) ? 0.0 : 1.0 / epsilon;
  if (scale > 0.0)
    for (auto& c : hist.counts) c += laplace_noise(scale, rng);
  return hist;
}

// Server-side CDF over summed noisy counts. Aggregated per-bin counts are
// clamped below at 0 before cumulation so the CDF stays monotone (clamping is
// post-processing and keeps the privacy guarantee intact).
inline std::vector<double> aggregate_cdf(const std::vector<NoisyHistogram>& hists) {
  if (hists.empty()) throw data_error("no histograms to aggregate");
  const std::size_t n_bins = hists.front().counts.size();
  for (const auto& h : hists)
    if (h.counts.size() != n_bins)
      throw data_error("histograms must share the same bin count");

  std::vector<double> global(n_bins, 0.0);
  for (const auto& h : hists)
    for (std::size_t b = 0; b < n_bins; ++b) global[b] += h.counts[b];
  for (auto& g : global) g = std::max(g, 0.0);

  double total = 0.0;
  for (double g : global) total += g;
  if (!(total > 0.0))
    throw numeric_error("degenerate histogram: total count is not positive after clamping");

  std::vector<double> cdf(n_bins);
  double cum = 0.0;
  for (std::size_t b = 0; b < n_bins; ++b) {
    cum += global[b];
    cdf[b] = cum / total;
  }
  cdf.back() = 1.0;
  return cdf;
}

// Single quantile from the aggregated CDF: the first bin whose CDF reaches
// tau, reported at that bin's right edge so F(reported) >= tau holds.
inline double cdf_quantile(const std::vector<double>& cdf, const HistogramSpec& spec,
                           double tau) {
  for (std::size_t b = 0; b < cdf.size(); ++b)
    if (cdf[b] >= tau) return spec.bin_edges[b + 1];
  return spec.bin_edges.back();
}

// Candidate cutoffs at levels tau_q = q/(Q+1), q = 1..Q, deduplicated.
inline std::vector<double> quantile_cutoffs(const std::vector<double>& cdf,
                                            const HistogramSpec& spec, int n_quantiles) {
  spec.validate();
  if (cdf.size() != spec.n_bins())
    throw data_error("CDF length does not match histogram bins");
  if (n_quantiles < 1) throw config_error("n_quantiles must be >= 1");
  for (std::size_t b = 1; b < cdf.size(); ++b)
    if (cdf[b] < cdf[b - 1] - 1e-12) throw data_error("CDF must be nondecreasing");

  std::vector<double> cutoffs;
  for (int q = 1; q <= n_quantiles; ++q) {
    const double tau = static_cast<double>(q) / static_cast<double>(n_quantiles + 1);
    cutoffs.push_back(cdf_quantile(cdf, spec, tau));
  }
  std::sort(cutoffs.begin(), cutoffs.end());
  cutoffs.erase(std::unique(cutoffs.begin(), cutoffs.end()), cutoffs.end());
  return cutoffs;
}

// Cutoff candidates plus the Winsorization thresholds estimated from the same
// aggregated CDF (single private pass over the data).
struct CutoffEstimate {
  CutoffSet cutoffs;
  std::vector<double> winsor_lower;  // q-quantile per covariate
  std::vector<double> winsor_upper;  // (1-q)-quantile per covariate
};

// Full preprocessing over a partition: per covariate, every client builds a
// noisy histogram on the shared spec, the server aggregates and extracts the
// quantile cutoffs and Winsorization bounds. Noise streams are derived per
// (client, covariate) so client-level parallelism cannot reorder draws.
inline CutoffEstimate build_cutoff_set(
    const ClientPartition& partition, const FedConfig& config, const RngStream& rng,
    bool dp_noise = true,
    const std::vector<std::pair<double, double>>* ranges = nullptr) {
  partition.validate();
  config.validate();
  const std::size_t p = partition.n_features();
  if (ranges && ranges->size() != p)
    throw config_error("histogram ranges must cover every covariate");

  const double epsilon =
      dp_noise ? config.epsilon : std::numeric_limits<double>::infinity();

  CutoffEstimate est;
  est.cutoffs.per_covariate.resize(p);
  est.winsor_lower.resize(p);
  est.winsor_upper.resize(p);

  for (std::size_t j = 0; j < p; ++j) {
    const double lo = ranges ? (*ranges)[j].first : config.hist_range_low;
    const double hi = ranges ? (*ranges)[j].second : config.hist_range_high;
    const HistogramSpec spec =
        HistogramSpec::uniform(lo, hi, static_cast<std::size_t>(config.n_bins));

    std::vector<NoisyHistogram> hists;
    hists.reserve(partition.n_clients());
    std::vector<double> column;
    for (std::size_t m = 0; m < partition.n_clients(); ++m) {
      const Dataset& client = partition.clients[m];
      column.resize(client.n_rows());
      for (std::size_t i = 0; i < client.n_rows(); ++i) column[i] = client.at(i, j);
      RngStream noise = rng.derive("dp-hist", m * p + j);
      hists.push_back(local_histogram(column, spec, epsilon, noise,
                                      partition.client_ids[m]));
    }

    const std::vector<double> cdf = aggregate_cdf(hists);
    est.cutoffs.per_covariate[j] = quantile_cutoffs(cdf, spec, config.n_quantiles);
    est.winsor_lower[j] = cdf_quantile(cdf, spec, config.winsor_q);
    est.winsor_upper[j] = cdf_quantile(cdf, spec, 1.0 - config.winsor_q);
    if (est.winsor_lower[j] > est.winsor_upper[j])
      est.winsor_lower[j] = est.winsor_upper[j];
  }
  return est;
}

}  // namespace fedrule
