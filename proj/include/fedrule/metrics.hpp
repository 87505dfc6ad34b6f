#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "fedrule/errors.hpp"

namespace fedrule {

// Mann-Whitney AUC with ties counted 0.5, via average ranks.
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw data_error("auc inputs must be non-empty and the same length");
  std::size_t n_pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw data_error("labels must be 0 or 1");
    n_pos += y;
  }
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw data_error("auc needs both classes present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j + 1);  // 1-based
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) pos_rank_sum += avg_rank;
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

// Accuracy and F1 at a fixed threshold (predicted positive when score >=
// threshold). F1 is 0 when there are no predicted or no actual positives.
inline std::pair<double, double> accuracy_f1(const std::vector<double>& scores,
                                             const std::vector<int>& labels,
                                             double threshold = 0.5) {
  if (scores.size() != labels.size() || scores.empty())
    throw data_error("metric inputs must be non-empty and the same length");
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (pred && labels[i] == 1) ++tp;
    else if (pred) ++fp;
    else if (labels[i] == 1) ++fn;
    else ++tn;
  }
  const double accuracy =
      static_cast<double>(tp + tn) / static_cast<double>(scores.size());
  const double denom = static_cast<double>(2 * tp + fp + fn);
  const double f1 = denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
  return {accuracy, f1};
}

}  // namespace fedrule
