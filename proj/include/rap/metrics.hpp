#pragma once

#include "rap/domain.hpp"
#include "rap/edit_distance.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <vector>

namespace rap {

// Per-pair metrics are templated on the element type so they work on action
// ids and on raw step names alike. All return percentages except success_rate.

template <typename T>
int success_rate(const std::vector<T>& pred, const std::vector<T>& gt) {
  return pred == gt ? 1 : 0;
}

/// Position-wise matches over max(|pred|, |gt|). Both empty counts as 100.
template <typename T>
double mean_accuracy(const std::vector<T>& pred, const std::vector<T>& gt) {
  const std::size_t longest = std::max(pred.size(), gt.size());
  if (longest == 0) return 100.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(pred.size(), gt.size()); ++i) hits += pred[i] == gt[i];
  return 100.0 * static_cast<double>(hits) / static_cast<double>(longest);
}

/// IoU of the unique-element sets. Both empty counts as 100.
template <typename T>
double mean_iou(const std::vector<T>& pred, const std::vector<T>& gt) {
  const std::set<T> a(pred.begin(), pred.end()), b(gt.begin(), gt.end());
  std::set<T> both = a;
  both.insert(b.begin(), b.end());
  if (both.empty()) return 100.0;
  std::size_t common = 0;
  for (const auto& x : a) common += b.count(x);
  return 100.0 * static_cast<double>(common) / static_cast<double>(both.size());
}

/// 100 (max - L) / max with L the unit-cost Levenshtein distance. Both empty is
/// 100 and sets `both_empty`.
template <typename T>
double edit_score(const std::vector<T>& pred, const std::vector<T>& gt, bool* both_empty = nullptr) {
  const std::size_t longest = std::max(pred.size(), gt.size());
  if (both_empty) *both_empty = longest == 0;
  if (longest == 0) return 100.0;
  const auto l = static_cast<double>(levenshtein(pred, gt));
  return 100.0 * (static_cast<double>(longest) - l) / static_cast<double>(longest);
}

struct HorizonStats {
  double sr = 0;
  int count = 0;
};

struct MetricsReport {
  double sr = 0;
  double macc = 0;
  double miou = 0;
  double mes = 0;
  double length_accuracy = 0;
  std::map<int, HorizonStats> per_horizon;  // keyed by ground-truth length
  int samples = 0;
  int empty_pairs = 0;  // both sequences empty; ES defined as 100
};

double length_accuracy(const std::vector<Plan>& preds, const std::vector<Plan>& gts);

/// Means of the per-sample metrics plus SR grouped by |gt|.
MetricsReport aggregate(const std::vector<Plan>& preds, const std::vector<Plan>& gts);

}  // namespace rap
