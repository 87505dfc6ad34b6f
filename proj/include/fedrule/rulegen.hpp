#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "fedrule/data.hpp"
#include "fedrule/dp_hist.hpp"
#include "fedrule/errors.hpp"
#include "fedrule/random.hpp"

namespace fedrule {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kPosInf = std::numeric_limits<double>::infinity();

// Half-open interval condition: lower <= x_j < upper.
struct RuleCondition {
  int covariate = 0;
  double lower = kNegInf;
  double upper = kPosInf;

  friend bool operator==(const RuleCondition& a, const RuleCondition& b) {
    return a.covariate == b.covariate && a.lower == b.lower && a.upper == b.upper;
  }
  friend bool operator<(const RuleCondition& a, const RuleCondition& b) {
    if (a.covariate != b.covariate) return a.covariate < b.covariate;
    if (a.lower != b.lower) return a.lower < b.lower;
    return a.upper < b.upper;
  }
};

// Conjunction of conditions on distinct covariates, kept in canonical form:
// sorted by covariate index, same-covariate splits merged by intersection.
struct Rule {
  std::vector<RuleCondition> conditions;

  bool matches(const double* x) const {
    for (const auto& c : conditions)
      if (!(x[c.covariate] >= c.lower && x[c.covariate] < c.upper)) return false;
    return true;
  }

  bool matches(const std::vector<double>& x) const { return matches(x.data()); }

  std::size_t n_covariates() const { return conditions.size(); }

  friend bool operator==(const Rule& a, const Rule& b) {
    return a.conditions == b.conditions;
  }
  friend bool operator<(const Rule& a, const Rule& b) {
    return a.conditions < b.conditions;
  }
};

inline std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline std::string format_rule(const Rule& rule,
                               const std::vector<std::string>& feature_names) {
  std::string out;
  for (const auto& c : rule.conditions) {
    const std::string name = c.covariate < static_cast<int>(feature_names.size())
                                 ? feature_names[c.covariate]
                                 : "x" + std::to_string(c.covariate + 1);
    if (std::isfinite(c.lower)) {
      if (!out.empty()) out += " & ";
      out += name + " >= " + format_value(c.lower);
    }
    if (std::isfinite(c.upper)) {
      if (!out.empty()) out += " & ";
      out += name + " < " + format_value(c.upper);
    }
  }
  return out;
}

// Canonicalize a raw condition list: merge per-covariate intervals, sort.
inline Rule canonicalize(const std::vector<RuleCondition>& raw) {
  std::map<int, RuleCondition> merged;
  for (const auto& c : raw) {
    auto [it, inserted] = merged.emplace(c.covariate, c);
    if (!inserted) {
      it->second.lower = std::max(it->second.lower, c.lower);
      it->second.upper = std::min(it->second.upper, c.upper);
    }
  }
  Rule rule;
  for (auto& [j, c] : merged) {
    if (!(c.lower < c.upper))
      throw numeric_error("rule conditions intersect to an empty interval");
    rule.conditions.push_back(c);
  }
  if (rule.conditions.empty()) throw numeric_error("rule needs at least one condition");
  return rule;
}

// Regression tree over cutoff-restricted splits. Node 0 is the root; leaves
// carry the fitted residual mean.
struct TreeNode {
  int split_covariate = -1;  // -1 marks a leaf
  double split_value = 0.0;
  double weight = 0.0;
  int left = -1;
  int right = -1;

  bool is_leaf() const { return split_covariate < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;

  std::size_t leaf_count() const {
    std::size_t n = 0;
    for (const auto& node : nodes)
      if (node.is_leaf()) ++n;
    return n;
  }

  double predict(const double* x) const {
    int idx = 0;
    while (!nodes[idx].is_leaf())
      idx = (x[nodes[idx].split_covariate] < nodes[idx].split_value) ? nodes[idx].left
                                                                     : nodes[idx].right;
    return nodes[idx].weight;
  }
};

// Deduplicated global rule candidate set, canonically ordered.
struct RuleSet {
  std::vector<Rule> rules;

  std::size_t size() const { return rules.size(); }
};

// Terminal-node budget: T = 2 + floor(omega), omega ~ Exponential(1/(Lbar-2)).
// Lbar = 2 is the degenerate rate -> infinity limit and always yields stumps.
inline int sample_leaves(double mean_depth, RngStream& rng) {
  if (!(mean_depth >= 2.0)) throw config_error("mean_depth must be >= 2");
  if (mean_depth == 2.0) return 2;
  const double omega = rng.exponential(1.0 / (mean_depth - 2.0));
  return 2 + static_cast<int>(std::floor(omega));
}

namespace detail {

struct SplitChoice {
  double gain = 0.0;
  int covariate = -1;
  int cutoff_index = -1;

  bool valid() const { return covariate >= 0; }
};

// Residual sums per cutoff interval, reused across nodes of one tree.
struct SplitWorkspace {
  // codes[j][i] = number of cutoffs of covariate j that are <= x_ij
  std::vector<std::vector<int>> codes;
  std::vector<std::vector<double>> bin_sum;
  std::vector<std::vector<int>> bin_cnt;

  void init(const Dataset& data, const CutoffSet& cutoffs) {
    const std::size_t p = data.n_features;
    codes.assign(p, {});
    bin_sum.assign(p, {});
    bin_cnt.assign(p, {});
    for (std::size_t j = 0; j < p; ++j) {
      const auto& cj = cutoffs.per_covariate[j];
      if (cj.empty()) continue;
      codes[j].resize(data.n_rows());
      for (std::size_t i = 0; i < data.n_rows(); ++i) {
        auto it = std::upper_bound(cj.begin(), cj.end(), data.at(i, j));
        codes[j][i] = static_cast<int>(it - cj.begin());
      }
      bin_sum[j].resize(cj.size() + 1);
      bin_cnt[j].resize(cj.size() + 1);
    }
  }
};

// Best squared-error split over all (covariate, cutoff) candidates for the
// rows in [begin, end). Ties break toward the lowest covariate index, then
// the lowest cutoff, so training is deterministic.
inline SplitChoice best_split(const std::vector<double>& residuals,
                              const std::vector<std::size_t>& rows, std::size_t begin,
                              std::size_t end, const CutoffSet& cutoffs,
                              SplitWorkspace& ws) {
  SplitChoice best;
  const std::size_t n = end - begin;
  if (n < 2) return best;

  double total_sum = 0.0;
  for (std::size_t k = begin; k < end; ++k) total_sum += residuals[rows[k]];
  const double parent_score = total_sum * total_sum / static_cast<double>(n);

  for (std::size_t j = 0; j < cutoffs.per_covariate.size(); ++j) {
    const auto& cj = cutoffs.per_covariate[j];
    if (cj.empty()) continue;
    auto& sums = ws.bin_sum[j];
    auto& cnts = ws.bin_cnt[j];
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(cnts.begin(), cnts.end(), 0);
    const auto& code = ws.codes[j];
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t i = rows[k];
      sums[code[i]] += residuals[i];
      cnts[code[i]] += 1;
    }
    double left_sum = 0.0;
    int left_cnt = 0;
    for (std::size_t t = 0; t + 1 < sums.size(); ++t) {
      left_sum += sums[t];
      left_cnt += cnts[t];
      const int right_cnt = static_cast<int>(n) - left_cnt;
      if (left_cnt == 0 || right_cnt == 0) continue;
      const double right_sum = total_sum - left_sum;
      const double gain = left_sum * left_sum / left_cnt +
                          right_sum * right_sum / right_cnt - parent_score;
      if (gain > best.gain && gain > 0.0) {
        best.gain = gain;
        best.covariate = static_cast<int>(j);
        best.cutoff_index = static_cast<int>(t);
      }
    }
  }
  return best;
}

struct GrowingNode {
  std::size_t begin = 0, end = 0;  // row range
  int node_index = -1;
  SplitChoice split;
};

}  // namespace detail

// One regression tree on residuals, grown best-first to at most `max_leaves`
// leaves over the given training rows (all rows when empty). Growth stops
// early when no remaining leaf has an improving split, so the realized leaf
// count may fall short of the budget.
inline Tree fit_regression_tree(const Dataset& data,
                                const std::vector<double>& residuals,
                                const CutoffSet& cutoffs, int max_leaves,
                                detail::SplitWorkspace& ws,
                                std::vector<std::size_t> rows = {}) {
  if (max_leaves < 2) throw config_error("trees need a leaf budget of at least 2");

  if (rows.empty()) {
    rows.resize(data.n_rows());
    std::iota(rows.begin(), rows.end(), 0);
  }

  Tree tree;
  tree.nodes.emplace_back();

  std::vector<detail::GrowingNode> leaves;
  detail::GrowingNode root;
  root.begin = 0;
  root.end = rows.size();
  root.node_index = 0;
  root.split = detail::best_split(residuals, rows, 0, rows.size(), cutoffs, ws);
  leaves.push_back(root);

  while (static_cast<int>(leaves.size()) < max_leaves) {
    // expand the leaf with the largest gain; earliest created wins ties
    std::size_t pick = leaves.size();
    double best_gain = 0.0;
    for (std::size_t k = 0; k < leaves.size(); ++k) {
      if (leaves[k].split.valid() && leaves[k].split.gain > best_gain) {
        best_gain = leaves[k].split.gain;
        pick = k;
      }
    }
    if (pick == leaves.size()) break;

    detail::GrowingNode node = leaves[pick];
    const auto& cj = cutoffs.per_covariate[node.split.covariate];
    const double split_value = cj[node.split.cutoff_index];
    const auto& code = ws.codes[node.split.covariate];
    const int threshold = node.split.cutoff_index;

    auto mid_it = std::stable_partition(
        rows.begin() + node.begin, rows.begin() + node.end,
        [&](std::size_t i) { return code[i] <= threshold; });
    const std::size_t mid = static_cast<std::size_t>(mid_it - rows.begin());

    TreeNode& parent = tree.nodes[node.node_index];
    parent.split_covariate = node.split.covariate;
    parent.split_value = split_value;
    parent.left = static_cast<int>(tree.nodes.size());
    parent.right = parent.left + 1;
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();

    detail::GrowingNode left, right;
    left.begin = node.begin;
    left.end = mid;
    left.node_index = parent.left;
    left.split = detail::best_split(residuals, rows, left.begin, left.end, cutoffs, ws);
    right.begin = mid;
    right.end = node.end;
    right.node_index = parent.right;
    right.split = detail::best_split(residuals, rows, right.begin, right.end, cutoffs, ws);

    leaves[pick] = left;
    leaves.push_back(right);
  }

  for (const auto& leaf : leaves) {
    double sum = 0.0;
    for (std::size_t k = leaf.begin; k < leaf.end; ++k) sum += residuals[rows[k]];
    tree.nodes[leaf.node_index].weight =
        sum / static_cast<double>(leaf.end - leaf.begin);
  }
  return tree;
}

// Local GBDT on the logistic pseudo-residuals, splits restricted to the
// shared cutoffs, leaf values kept as plain residual means. Each tree trains
// on a fresh row subsample of fraction config.subsample (the whole dataset
// at 1.0); score updates always apply to every row.
inline std::vector<Tree> fit_local_gbdt(const Dataset& data, const CutoffSet& cutoffs,
                                        const FedConfig& config, RngStream& rng) {
  data.validate();
  if (cutoffs.per_covariate.size() != data.n_features)
    throw data_error("cutoff set does not match covariate count");
  if (cutoffs.all_empty())
    throw data_error("cutoff set is empty for every covariate");
  if (config.n_trees < 1) throw config_error("n_trees must be >= 1");
  if (!(config.mean_depth >= 2.0)) throw config_error("mean_depth must be >= 2");
  if (!(config.subsample > 0.0) || config.subsample > 1.0)
    throw config_error("subsample must be in (0, 1]");

  double positives = 0.0;
  for (int y : data.outcomes) positives += y;
  const double negatives = static_cast<double>(data.n_rows()) - positives;
  if (positives == 0.0 || negatives == 0.0)
    throw data_error("local GBDT needs both outcome classes");
  const double f0 = std::log(positives / negatives);

  detail::SplitWorkspace ws;
  ws.init(data, cutoffs);

  const std::size_t n = data.n_rows();
  std::size_t n_sub = n;
  if (config.subsample < 1.0)
    n_sub = std::max<std::size_t>(
        2, static_cast<std::size_t>(std::llround(config.subsample * n)));

  std::vector<double> score(n, f0);
  std::vector<double> residuals(n);
  std::vector<std::size_t> pool_idx(n);
  std::vector<Tree> trees;
  trees.reserve(config.n_trees);

  for (int c = 0; c < config.n_trees; ++c) {
    for (std::size_t i = 0; i < n; ++i)
      residuals[i] = data.outcomes[i] - 1.0 / (1.0 + std::exp(-score[i]));
    const int t_c = sample_leaves(config.mean_depth, rng);

    std::vector<std::size_t> rows;
    if (n_sub < n) {
      std::iota(pool_idx.begin(), pool_idx.end(), 0);
      for (std::size_t k = 0; k < n_sub; ++k) {
        const std::size_t j = k + static_cast<std::size_t>(rng.next_u64() % (n - k));
        std::swap(pool_idx[k], pool_idx[j]);
      }
      rows.assign(pool_idx.begin(), pool_idx.begin() + n_sub);
      std::sort(rows.begin(), rows.end());
    }

    Tree tree = fit_regression_tree(data, residuals, cutoffs, t_c, ws, std::move(rows));
    for (std::size_t i = 0; i < n; ++i)
      score[i] += config.shrinkage * tree.predict(data.row(i));
    trees.push_back(std::move(tree));
  }
  return trees;
}

// Every non-root node contributes the conjunction of split conditions along
// its path, which is 2(T-1) rules for a tree with T leaves.
inline std::vector<Rule> extract_rules(const std::vector<Tree>& trees) {
  std::vector<Rule> rules;
  std::vector<RuleCondition> path;

  auto walk = [&](auto&& self, const Tree& tree, int idx) -> void {
    if (!path.empty()) rules.push_back(canonicalize(path));
    const TreeNode& node = tree.nodes[idx];
    if (node.is_leaf()) return;
    path.push_back({node.split_covariate, kNegInf, node.split_value});
    self(self, tree, node.left);
    path.back() = {node.split_covariate, node.split_value, kPosInf};
    self(self, tree, node.right);
    path.pop_back();
  };

  for (const auto& tree : trees) {
    path.clear();
    walk(walk, tree, 0);
  }
  return rules;
}

// Set-deduplication on canonical form; output order is canonical, so the
// result is insensitive to input order.
inline RuleSet dedup_rules(std::vector<Rule> all_rules) {
  std::sort(all_rules.begin(), all_rules.end());
  all_rules.erase(std::unique(all_rules.begin(), all_rules.end()), all_rules.end());
  RuleSet set;
  set.rules = std::move(all_rules);
  return set;
}

// Per-client candidate cutoffs from the observed values themselves (used by
// the no-preprocessing baseline). The smallest distinct value is dropped:
// splitting below it would leave an empty side.
inline CutoffSet local_value_cutoffs(const Dataset& data) {
  CutoffSet cutoffs;
  cutoffs.per_covariate.resize(data.n_features);
  for (std::size_t j = 0; j < data.n_features; ++j) {
    std::vector<double> values(data.n_rows());
    for (std::size_t i = 0; i < data.n_rows(); ++i) values[i] = data.at(i, j);
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    if (values.size() > 1)
      cutoffs.per_covariate[j].assign(values.begin() + 1, values.end());
  }
  return cutoffs;
}

// Server-side rule generation: clients fit GBDTs independently on derived
// seeds, rules are pooled and deduplicated.
// `shared_cutoffs` may be null to let each client split on its own observed
// values. `raw_rule_count` receives the pre-dedup total when requested.
inline RuleSet federated_rule_generation(const ClientPartition& partition,
                                         const CutoffSet* shared_cutoffs,
                                         const FedConfig& config, const RngStream& rng,
                                         std::size_t* raw_rule_count = nullptr) {
  partition.validate();
  std::vector<Rule> pooled;
  for (std::size_t m = 0; m < partition.n_clients(); ++m) {
    RngStream client_rng = rng.derive("gbdt", m);
    try {
      const CutoffSet local = shared_cutoffs
                                  ? CutoffSet{}
                                  : local_value_cutoffs(partition.clients[m]);
      const CutoffSet& cutoffs = shared_cutoffs ? *shared_cutoffs : local;
      const auto trees =
          fit_local_gbdt(partition.clients[m], cutoffs, config, client_rng);
      auto rules = extract_rules(trees);
      pooled.insert(pooled.end(), std::make_move_iterator(rules.begin()),
                    std::make_move_iterator(rules.end()));
    } catch (const std::exception& e) {
      throw data_error(partition.client_ids[m] + ": " + e.what());
    }
  }
  if (raw_rule_count) *raw_rule_count = pooled.size();
  return dedup_rules(std::move(pooled));
}

inline RuleSet federated_rule_generation(const ClientPartition& partition,
                                         const CutoffSet& shared_cutoffs,
                                         const FedConfig& config, const RngStream& rng,
                                         std::size_t* raw_rule_count = nullptr) {
  return federated_rule_generation(partition, &shared_cutoffs, config, rng,
                                   raw_rule_count);
}

}  // namespace fedrule
