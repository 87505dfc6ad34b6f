#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedrule/data.hpp"
#include "fedrule/featurize.hpp"
#include "fedrule/model.hpp"

namespace fedrule {

struct BaseFunctionEntry {
  bool is_rule = false;
  std::size_t index = 0;        // into rules or linear terms
  std::string display;
  double coefficient = 0.0;
  double exp_coefficient = 1.0;
  double importance = 0.0;      // |coef| * pooled SD of the realized column
  double support = 0.0;         // rules only; 0 for linear terms
};

struct ImportanceReport {
  std::vector<BaseFunctionEntry> base_functions;
  std::vector<double> variable_importance;  // per covariate
  std::vector<std::string> feature_names;
  bool rescaled = false;  // importances scaled so the maximum is 100
};

namespace detail {

// Pooled SD of a term's realized column: per-client sample SDs combined with
// (N_m - 1) weights, variances inside the weighted average.
template <typename ColumnFn>
double pooled_column_sd(const ClientPartition& partition, ColumnFn&& column_value) {
  std::vector<double> sds;
  std::vector<std::size_t> ns;
  std::vector<double> column;
  for (const auto& client : partition.clients) {
    column.resize(client.n_rows());
    for (std::size_t i = 0; i < client.n_rows(); ++i)
      column[i] = column_value(client, i);
    sds.push_back(sample_sd(column));
    ns.push_back(client.n_rows());
  }
  return pooled_sd(sds, ns);
}

}  // namespace detail

// Base-function importance for every rule and linear term of the model,
// evaluated on the given partition.
inline ImportanceReport base_importance(const RuleFitModel& model,
                                        const ClientPartition& partition,
                                        bool rescale = true) {
  model.validate();
  partition.validate();
  if (partition.n_features() != model.n_features())
    throw data_error("partition does not match the model's covariates");

  ImportanceReport report;
  report.feature_names = model.feature_names;
  const std::vector<double> supports = rule_support(model.rules, partition);

  for (std::size_t k = 0; k < model.rules.size(); ++k) {
    const Rule& rule = model.rules.rules[k];
    BaseFunctionEntry entry;
    entry.is_rule = true;
    entry.index = k;
    entry.display = format_rule(rule, model.feature_names);
    entry.coefficient = model.coefficients.rule_coefs[k];
    entry.exp_coefficient = std::exp(entry.coefficient);
    entry.support = supports[k];
    entry.importance =
        entry.coefficient == 0.0
            ? 0.0
            : std::fabs(entry.coefficient) *
                  detail::pooled_column_sd(partition, [&](const Dataset& c, std::size_t i) {
                    return rule.matches(c.row(i)) ? 1.0 : 0.0;
                  });
    report.base_functions.push_back(std::move(entry));
  }

  for (std::size_t t = 0; t < model.linear_spec.terms.size(); ++t) {
    const LinearTerm& term = model.linear_spec.terms[t];
    BaseFunctionEntry entry;
    entry.is_rule = false;
    entry.index = t;
    entry.display = "linear(" + model.feature_names[term.covariate] + ")";
    entry.coefficient = model.coefficients.linear_coefs[t];
    entry.exp_coefficient = std::exp(entry.coefficient);
    entry.importance =
        entry.coefficient == 0.0
            ? 0.0
            : std::fabs(entry.coefficient) *
                  detail::pooled_column_sd(partition, [&](const Dataset& c, std::size_t i) {
                    return term.scale * winsorize(c.at(i, term.covariate),
                                                  term.lower, term.upper);
                  });
    report.base_functions.push_back(std::move(entry));
  }

  // Variable importance: the linear term's importance plus each containing
  // rule's importance split evenly across the rule's distinct covariates.
  report.variable_importance.assign(model.n_features(), 0.0);
  for (const auto& entry : report.base_functions) {
    if (entry.is_rule) {
      const Rule& rule = model.rules.rules[entry.index];
      const double share = entry.importance / static_cast<double>(rule.n_covariates());
      for (const auto& cond : rule.conditions)
        report.variable_importance[cond.covariate] += share;
    } else {
      report.variable_importance[model.linear_spec.terms[entry.index].covariate] +=
          entry.importance;
    }
  }

  if (rescale) {
    double max_imp = 0.0;
    for (const auto& e : report.base_functions) max_imp = std::max(max_imp, e.importance);
    for (double v : report.variable_importance) max_imp = std::max(max_imp, v);
    if (max_imp > 0.0) {
      const double factor = 100.0 / max_imp;
      for (auto& e : report.base_functions) e.importance *= factor;
      for (auto& v : report.variable_importance) v *= factor;
      report.rescaled = true;
    }
  }
  return report;
}

inline std::vector<double> variable_importance(const RuleFitModel& model,
                                               const ClientPartition& partition,
                                               bool rescale = false) {
  return base_importance(model, partition, rescale).variable_importance;
}

// Rules with support above the floor, ranked by importance. Ties break by
// support, then display string, so the ordering is total.
inline std::vector<BaseFunctionEntry> top_rules(const ImportanceReport& report,
                                                std::size_t k, double min_support) {
  std::vector<BaseFunctionEntry> rules;
  for (const auto& e : report.base_functions)
    if (e.is_rule && e.support > min_support) rules.push_back(e);
  std::sort(rules.begin(), rules.end(),
            [](const BaseFunctionEntry& a, const BaseFunctionEntry& b) {
              if (a.importance != b.importance) return a.importance > b.importance;
              if (a.support != b.support) return a.support > b.support;
              return a.display < b.display;
            });
  if (rules.size() > k) rules.resize(k);
  return rules;
}

struct SubgroupRates {
  std::optional<double> in_rate;   // positive rate where the rule fires
  std::optional<double> out_rate;  // positive rate where it does not
  std::size_t in_count = 0;
  std::size_t out_count = 0;
};

// Pooled outcome rates inside and outside the rule's subgroup, from
// per-client counts. An empty side reports an absent rate.
inline SubgroupRates subgroup_rates(const Rule& rule, const ClientPartition& partition) {
  partition.validate();
  std::size_t in_pos = 0, out_pos = 0;
  SubgroupRates rates;
  for (const auto& client : partition.clients)
    for (std::size_t i = 0; i < client.n_rows(); ++i) {
      if (rule.matches(client.row(i))) {
        ++rates.in_count;
        in_pos += client.outcomes[i];
      } else {
        ++rates.out_count;
        out_pos += client.outcomes[i];
      }
    }
  if (rates.in_count > 0)
    rates.in_rate = static_cast<double>(in_pos) / static_cast<double>(rates.in_count);
  if (rates.out_count > 0)
    rates.out_rate = static_cast<double>(out_pos) / static_cast<double>(rates.out_count);
  return rates;
}

inline nlohmann::json report_to_json(const ImportanceReport& report) {
  nlohmann::json base = nlohmann::json::array();
  for (const auto& e : report.base_functions)
    base.push_back(nlohmann::json{{"kind", e.is_rule ? "rule" : "linear"},
                                  {"display", e.display},
                                  {"coefficient", e.coefficient},
                                  {"exp_coefficient", e.exp_coefficient},
                                  {"importance", e.importance},
                                  {"support", e.support}});
  nlohmann::json variables = nlohmann::json::object();
  for (std::size_t j = 0; j < report.feature_names.size(); ++j)
    variables[report.feature_names[j]] = report.variable_importance[j];
  return nlohmann::json{{"rescaled", report.rescaled},
                        {"base_functions", base},
                        {"variable_importance", variables}};
}

// Aligned text table over (Rule, exp(coef.), importance, support).
inline std::string report_to_table(const ImportanceReport& report,
                                   std::size_t top_k = 10, double min_support = 0.0) {
  const auto rules = top_rules(report, top_k, min_support);
  std::size_t width = 4;
  for (const auto& e : rules) width = std::max(width, e.display.size());

  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-*s  %10s  %10s  %8s\n",
                static_cast<int>(width), "Rule", "exp(coef.)", "importance", "support");
  out += line;
  for (const auto& e : rules) {
    std::snprintf(line, sizeof(line), "%-*s  %10.2f  %10.1f  %8.2f\n",
                  static_cast<int>(width), e.display.c_str(), e.exp_coefficient,
                  e.importance, e.support);
    out += line;
  }
  return out;
}

}  // namespace fedrule
