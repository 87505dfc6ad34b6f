#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fedrule/data.hpp"
#include "fedrule/errors.hpp"
#include "fedrule/fedda.hpp"
#include "fedrule/featurize.hpp"
#include "fedrule/rulegen.hpp"

namespace fedrule {

constexpr int kModelSchemaVersion = 1;

struct TrainingInfo {
  FedConfig config;
  std::uint64_t seed = 0;
  std::size_t rules_before_dedup = 0;
  std::size_t rules_after_dedup = 0;
  bool dp_noise = true;
  bool preprocess = true;  // false = observed-value splits baseline
};

// Trained global model: intercept + rule terms + Winsorized linear terms.
struct RuleFitModel {
  RuleSet rules;
  LinearTermSpec linear_spec;
  CoefficientVector coefficients;
  std::vector<double> supports;
  std::vector<std::string> feature_names;
  TrainingInfo info;

  std::size_t n_features() const { return feature_names.size(); }

  void validate() const {
    if (coefficients.rule_coefs.size() != rules.size())
      throw data_error("rule coefficients do not match rule count");
    if (coefficients.linear_coefs.size() != linear_spec.terms.size())
      throw data_error("linear coefficients do not match linear-term count");
    if (supports.size() != rules.size())
      throw data_error("supports do not match rule count");
    for (double s : supports)
      if (!(s >= 0.0 && s <= 1.0)) throw data_error("supports must lie in [0, 1]");
    if (linear_spec.n_covariates != n_features())
      throw data_error("linear-term spec does not match feature names");
  }

  double linear_predictor(const double* x) const {
    double eta = coefficients.intercept;
    for (std::size_t k = 0; k < rules.size(); ++k)
      if (coefficients.rule_coefs[k] != 0.0 && rules.rules[k].matches(x))
        eta += coefficients.rule_coefs[k];
    for (std::size_t t = 0; t < linear_spec.terms.size(); ++t) {
      const double b = coefficients.linear_coefs[t];
      if (b == 0.0) continue;
      const LinearTerm& term = linear_spec.terms[t];
      eta += b * term.scale * winsorize(x[term.covariate], term.lower, term.upper);
    }
    return eta;
  }

  double predict_proba(const double* x, std::size_t p) const {
    if (p != n_features())
      throw data_error("input dimension does not match the model");
    return sigmoid(linear_predictor(x));
  }

  double predict_proba(const std::vector<double>& x) const {
    return predict_proba(x.data(), x.size());
  }
};

// ---------------------------------------------------------------------------
// JSON serialization (model schema v1)
// ---------------------------------------------------------------------------

inline nlohmann::json config_to_json(const FedConfig& c) {
  return nlohmann::json{{"n_trees", c.n_trees},
                        {"mean_depth", c.mean_depth},
                        {"shrinkage", c.shrinkage},
                        {"epsilon", c.epsilon},
                        {"n_bins", c.n_bins},
                        {"n_quantiles", c.n_quantiles},
                        {"lambda", c.lambda},
                        {"eta_server", c.eta_server},
                        {"eta_client", c.eta_client},
                        {"rounds", c.rounds},
                        {"local_iters", c.local_iters},
                        {"winsor_q", c.winsor_q},
                        {"rng_seed", c.rng_seed},
                        {"hist_range_low", c.hist_range_low},
                        {"hist_range_high", c.hist_range_high}};
}

inline FedConfig config_from_json(const nlohmann::json& j, bool reject_unknown = true) {
  if (!j.is_object()) throw config_error("config must be a JSON object");
  FedConfig c;
  const auto known = config_to_json(c);
  if (reject_unknown)
    for (const auto& [key, value] : j.items())
      if (!known.contains(key))
        throw config_error("unknown config key '" + key + "'");
  try {
    c.n_trees = j.value("n_trees", c.n_trees);
    c.mean_depth = j.value("mean_depth", c.mean_depth);
    c.shrinkage = j.value("shrinkage", c.shrinkage);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.n_bins = j.value("n_bins", c.n_bins);
    c.n_quantiles = j.value("n_quantiles", c.n_quantiles);
    c.lambda = j.value("lambda", c.lambda);
    c.eta_server = j.value("eta_server", c.eta_server);
    c.eta_client = j.value("eta_client", c.eta_client);
    c.rounds = j.value("rounds", c.rounds);
    c.local_iters = j.value("local_iters", c.local_iters);
    c.winsor_q = j.value("winsor_q", c.winsor_q);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    c.hist_range_low = j.value("hist_range_low", c.hist_range_low);
    c.hist_range_high = j.value("hist_range_high", c.hist_range_high);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("malformed config value: ") + e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::json rule_to_json(const Rule& rule,
                                   const std::vector<std::string>& feature_names) {
  nlohmann::json conditions = nlohmann::json::array();
  for (const auto& c : rule.conditions) {
    nlohmann::json cond{{"feature_index", c.covariate}};
    if (std::isfinite(c.lower)) cond["lower"] = c.lower;
    if (std::isfinite(c.upper)) cond["upper"] = c.upper;
    conditions.push_back(cond);
  }
  return nlohmann::json{{"conditions", conditions},
                        {"display", format_rule(rule, feature_names)}};
}

inline Rule rule_from_json(const nlohmann::json& j) {
  if (!j.contains("conditions") || !j["conditions"].is_array())
    throw data_error("model schema error: rule without conditions");
  std::vector<RuleCondition> raw;
  for (const auto& cond : j["conditions"]) {
    RuleCondition c;
    c.covariate = cond.at("feature_index").get<int>();
    c.lower = cond.contains("lower") ? cond["lower"].get<double>() : kNegInf;
    c.upper = cond.contains("upper") ? cond["upper"].get<double>() : kPosInf;
    raw.push_back(c);
  }
  return canonicalize(raw);
}

// {feature_name: [cutoffs]}
inline nlohmann::json cutoffs_to_json(const CutoffSet& cutoffs,
                                      const std::vector<std::string>& feature_names) {
  if (feature_names.size() != cutoffs.n_covariates())
    throw data_error("feature names do not match cutoff covariates");
  nlohmann::json out = nlohmann::json::object();
  for (std::size_t j = 0; j < cutoffs.n_covariates(); ++j)
    out[feature_names[j]] = cutoffs.per_covariate[j];
  return out;
}

inline nlohmann::json model_to_json(const RuleFitModel& model) {
  model.validate();
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& rule : model.rules.rules)
    rules.push_back(rule_to_json(rule, model.feature_names));

  nlohmann::json linear_terms = nlohmann::json::array();
  for (const auto& t : model.linear_spec.terms)
    linear_terms.push_back(nlohmann::json{{"feature_index", t.covariate},
                                          {"lower", t.lower},
                                          {"upper", t.upper},
                                          {"pooled_sd", t.pooled_sd},
                                          {"scale", t.scale}});

  return nlohmann::json{
      {"schema_version", kModelSchemaVersion},
      {"config", config_to_json(model.info.config)},
      {"feature_names", model.feature_names},
      {"rules", rules},
      {"linear_terms", linear_terms},
      {"coefficients",
       {{"intercept", model.coefficients.intercept},
        {"rules", model.coefficients.rule_coefs},
        {"linear", model.coefficients.linear_coefs}}},
      {"supports", model.supports},
      {"metadata",
       {{"seed", model.info.seed},
        {"rules_before_dedup", model.info.rules_before_dedup},
        {"rules_after_dedup", model.info.rules_after_dedup},
        {"dp_noise", model.info.dp_noise},
        {"preprocess", model.info.preprocess}}}};
}

inline RuleFitModel model_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw data_error("model file is not a JSON object");
  if (!j.contains("schema_version"))
    throw data_error("model schema error: missing 'schema_version'");
  const int version = j["schema_version"].get<int>();
  if (version != kModelSchemaVersion)
    throw data_error("model schema version " + std::to_string(version) +
                     " is not supported by this build (expected " +
                     std::to_string(kModelSchemaVersion) + ")");
  for (const char* key : {"config", "feature_names", "rules", "linear_terms",
                          "coefficients", "supports"})
    if (!j.contains(key))
      throw data_error(std::string("model schema error: missing '") + key + "'");

  RuleFitModel model;
  try {
    model.info.config = config_from_json(j["config"], /*reject_unknown=*/false);
    model.feature_names = j["feature_names"].get<std::vector<std::string>>();
    for (const auto& r : j["rules"]) model.rules.rules.push_back(rule_from_json(r));
    model.linear_spec.n_covariates = model.feature_names.size();
    for (const auto& t : j["linear_terms"]) {
      LinearTerm term;
      term.covariate = t.at("feature_index").get<int>();
      term.lower = t.at("lower").get<double>();
      term.upper = t.at("upper").get<double>();
      term.pooled_sd = t.at("pooled_sd").get<double>();
      term.scale = t.at("scale").get<double>();
      model.linear_spec.terms.push_back(term);
    }
    const auto& coef = j["coefficients"];
    model.coefficients.intercept = coef.at("intercept").get<double>();
    model.coefficients.rule_coefs = coef.at("rules").get<std::vector<double>>();
    model.coefficients.linear_coefs = coef.at("linear").get<std::vector<double>>();
    model.supports = j["supports"].get<std::vector<double>>();
    if (j.contains("metadata")) {
      const auto& meta = j["metadata"];
      model.info.seed = meta.value("seed", std::uint64_t{0});
      model.info.rules_before_dedup = meta.value("rules_before_dedup", std::size_t{0});
      model.info.rules_after_dedup = meta.value("rules_after_dedup", std::size_t{0});
      model.info.dp_noise = meta.value("dp_noise", true);
      model.info.preprocess = meta.value("preprocess", true);
    }
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("corrupted model file: ") + e.what());
  }
  model.validate();
  return model;
}

inline void save_model(const RuleFitModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write model file: " + path);
  out << model_to_json(model).dump(2) << "\n";
  if (!out) throw io_error("failed writing model file: " + path);
}

inline RuleFitModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open model file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw data_error("corrupted model file " + path + ": " + e.what());
  }
  return model_from_json(j);
}

}  // namespace fedrule
