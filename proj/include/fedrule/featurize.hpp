#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "fedrule/data.hpp"
#include "fedrule/errors.hpp"
#include "fedrule/rulegen.hpp"

namespace fedrule {

// Winsorized, normalized linear term for one covariate. The 0.4 factor is
// the average rule-term standard deviation under uniformly distributed rule
// support, so rule and linear columns compete on a comparable scale.
struct LinearTerm {
  int covariate = 0;
  double lower = 0.0;     // Winsorization bounds
  double upper = 0.0;
  double pooled_sd = 0.0;
  double scale = 0.0;     // 0.4 / pooled_sd
};

// Included linear terms; covariates with zero pooled SD drop their linear
// term but stay eligible inside rules.
struct LinearTermSpec {
  std::vector<LinearTerm> terms;
  std::size_t n_covariates = 0;
};

// Client-weighted pooled standard deviation from per-client sample SDs.
inline double pooled_sd(const std::vector<double>& per_client_sds,
                        const std::vector<std::size_t>& per_client_ns) {
  if (per_client_sds.size() != per_client_ns.size() || per_client_sds.empty())
    throw data_error("pooled_sd inputs must be non-empty and the same length");
  double num = 0.0, den = 0.0;
  for (std::size_t m = 0; m < per_client_sds.size(); ++m) {
    if (per_client_ns[m] < 1) throw data_error("client sizes must be >= 1");
    const double w = static_cast<double>(per_client_ns[m]) - 1.0;
    num += w * per_client_sds[m] * per_client_sds[m];
    den += w;
  }
  if (den <= 0.0) throw data_error("pooled_sd needs at least one client with n >= 2");
  return std::sqrt(num / den);
}

inline double winsorize(double x, double lower, double upper) {
  if (!(lower <= upper)) throw numeric_error("winsorize needs lower <= upper");
  return std::min(upper, std::max(lower, x));
}

namespace detail {

inline double sample_sd(const std::vector<double>& values) {
  const std::size_t n = values.size();
  if (n < 2) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(n - 1));
}

}  // namespace detail

// Linear-term metadata from Winsorization bounds plus the pooled SD of the
// raw covariate across clients.
inline LinearTermSpec make_linear_term_spec(const ClientPartition& partition,
                                            const std::vector<double>& winsor_lower,
                                            const std::vector<double>& winsor_upper) {
  partition.validate();
  const std::size_t p = partition.n_features();
  if (winsor_lower.size() != p || winsor_upper.size() != p)
    throw data_error("Winsorization bounds must cover every covariate");

  LinearTermSpec spec;
  spec.n_covariates = p;
  std::vector<double> sds;
  std::vector<std::size_t> ns;
  std::vector<double> column;
  for (std::size_t j = 0; j < p; ++j) {
    sds.clear();
    ns.clear();
    for (const auto& client : partition.clients) {
      column.resize(client.n_rows());
      for (std::size_t i = 0; i < client.n_rows(); ++i) column[i] = client.at(i, j);
      sds.push_back(detail::sample_sd(column));
      ns.push_back(client.n_rows());
    }
    const double sd = pooled_sd(sds, ns);
    if (sd > 0.0) {
      LinearTerm term;
      term.covariate = static_cast<int>(j);
      term.lower = winsor_lower[j];
      term.upper = winsor_upper[j];
      term.pooled_sd = sd;
      term.scale = 0.4 / sd;
      spec.terms.push_back(term);
    }
  }
  return spec;
}

// Non-private variant for the no-preprocessing baseline: Winsorization
// bounds from pooled empirical quantiles at levels q and 1-q.
inline LinearTermSpec make_linear_term_spec_empirical(const ClientPartition& partition,
                                                      double winsor_q) {
  partition.validate();
  if (!(winsor_q > 0.0 && winsor_q < 0.5))
    throw config_error("winsor_q must be in (0, 0.5)");
  const std::size_t p = partition.n_features();
  const Dataset pooled = pool(partition);
  std::vector<double> lower(p), upper(p), column(pooled.n_rows());
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t i = 0; i < pooled.n_rows(); ++i) column[i] = pooled.at(i, j);
    std::sort(column.begin(), column.end());
    const auto pick = [&](double tau) {
      const std::size_t k = static_cast<std::size_t>(
          std::ceil(tau * static_cast<double>(column.size())));
      return column[std::min(column.size() - 1, k > 0 ? k - 1 : 0)];
    };
    lower[j] = pick(winsor_q);
    upper[j] = pick(1.0 - winsor_q);
  }
  return make_linear_term_spec(partition, lower, upper);
}

// Feature matrix: K binary rule columns followed by the included linear
// columns. Row-major; never serialized.
struct DesignMatrix {
  std::size_t n_rows = 0;
  std::size_t n_rule_cols = 0;
  std::size_t n_linear_cols = 0;
  std::vector<double> values;

  std::size_t n_cols() const { return n_rule_cols + n_linear_cols; }

  const double* row(std::size_t i) const { return values.data() + i * n_cols(); }

  double at(std::size_t i, std::size_t c) const { return row(i)[c]; }
};

inline DesignMatrix build_design(const Dataset& data, const RuleSet& rules,
                                 const LinearTermSpec& lts) {
  data.validate();
  if (lts.n_covariates != data.n_features)
    throw data_error("linear-term spec does not match covariate count");
  for (const auto& rule : rules.rules)
    for (const auto& c : rule.conditions)
      if (c.covariate < 0 || c.covariate >= static_cast<int>(data.n_features))
        throw data_error("rule condition references an unknown covariate");

  DesignMatrix design;
  design.n_rows = data.n_rows();
  design.n_rule_cols = rules.size();
  design.n_linear_cols = lts.terms.size();
  design.values.resize(design.n_rows * design.n_cols());

  for (std::size_t i = 0; i < design.n_rows; ++i) {
    const double* x = data.row(i);
    double* out = design.values.data() + i * design.n_cols();
    for (std::size_t k = 0; k < rules.size(); ++k)
      out[k] = rules.rules[k].matches(x) ? 1.0 : 0.0;
    for (std::size_t t = 0; t < lts.terms.size(); ++t) {
      const LinearTerm& term = lts.terms[t];
      out[design.n_rule_cols + t] =
          term.scale * winsorize(x[term.covariate], term.lower, term.upper);
    }
  }
  return design;
}

// Global rule support: clients report local firing counts, the server sums
// and divides by the total sample size.
inline std::vector<double> rule_support(const RuleSet& rules,
                                        const ClientPartition& partition) {
  partition.validate();
  std::vector<double> counts(rules.size(), 0.0);
  for (const auto& client : partition.clients)
    for (std::size_t i = 0; i < client.n_rows(); ++i) {
      const double* x = client.row(i);
      for (std::size_t k = 0; k < rules.size(); ++k)
        if (rules.rules[k].matches(x)) counts[k] += 1.0;
    }
  const double total = static_cast<double>(partition.total_rows());
  for (auto& c : counts) c /= total;
  return counts;
}

}  // namespace fedrule
