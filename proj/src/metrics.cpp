#include "rap/metrics.hpp"

namespace rap {

namespace {

void check_aligned(const std::vector<Plan>& preds, const std::vector<Plan>& gts) {
  if (preds.size() != gts.size()) {
    throw Error("shape mismatch", std::to_string(preds.size()) + " predictions for " + std::to_string(gts.size()) +
                                      " ground-truth plans");
  }
}

}  // namespace

double length_accuracy(const std::vector<Plan>& preds, const std::vector<Plan>& gts) {
  check_aligned(preds, gts);
  if (preds.empty()) throw Error("empty input", "length_accuracy needs at least one sample");
  int hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i].horizon() == gts[i].horizon();
  return 100.0 * hits / static_cast<double>(preds.size());
}

MetricsReport aggregate(const std::vector<Plan>& preds, const std::vector<Plan>& gts) {
  check_aligned(preds, gts);
  if (preds.empty()) throw Error("empty input", "aggregate needs at least one sample");
  MetricsReport r;
  r.samples = static_cast<int>(preds.size());
  std::map<int, int> horizon_hits;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& p = preds[i].actions;
    const auto& g = gts[i].actions;
    const int success = success_rate(p, g);
    bool empty = false;
    r.sr += success;
    r.macc += mean_accuracy(p, g);
    r.miou += mean_iou(p, g);
    r.mes += edit_score(p, g, &empty);
    r.empty_pairs += empty;
    auto& h = r.per_horizon[gts[i].horizon()];
    h.count += 1;
    horizon_hits[gts[i].horizon()] += success;
  }
  const double n = r.samples;
  r.sr = 100.0 * r.sr / n;
  r.macc /= n;
  r.miou /= n;
  r.mes /= n;
  r.length_accuracy = length_accuracy(preds, gts);
  for (auto& [t, h] : r.per_horizon) h.sr = 100.0 * horizon_hits[t] / static_cast<double>(h.count);
  return r;
}

}  // namespace rap
