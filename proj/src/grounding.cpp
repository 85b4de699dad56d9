#include "rap/grounding.hpp"

#include <algorithm>
#include <cmath>

namespace rap {

void GroundingConfig::validate() const {
  if (!(perc >= 0.0 && perc <= 100.0)) throw Error("invalid config", "perc must lie in [0, 100]");
}

Matrix match_cost(const Matrix& frames, const Matrix& actions) {
  if (frames.rows() != actions.rows()) throw Error("dimension mismatch", "frames and actions differ in width");
  const Vector fn = frames.colwise().norm().transpose();
  const Vector an = actions.colwise().norm().transpose();
  if ((fn.array() == 0.0).any() || (an.array() == 0.0).any()) {
    throw Error("degenerate embedding", "zero-norm frame or action in match_cost");
  }
  Matrix cos = frames.transpose() * actions;
  cos.array().colwise() /= fn.array();
  cos.array().rowwise() /= an.transpose().array();
  return (1.0 - cos.array().cwiseMax(-1.0).cwiseMin(1.0)).matrix();
}

double drop_cost(const Matrix& cost, double perc) {
  if (cost.size() == 0) throw Error("empty matrix", "drop_cost needs at least one entry");
  if (!(perc >= 0.0 && perc <= 100.0)) throw Error("invalid config", "perc must lie in [0, 100]");
  std::vector<double> v(cost.data(), cost.data() + cost.size());
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(perc / 100.0 * static_cast<double>(v.size())));
  return v[rank == 0 ? 0 : rank - 1];
}

namespace {

constexpr double kCostTie = 1e-9;

struct Run {
  int first = 0;  // surviving-frame index
  int last = 0;
  int action = 0;  // surviving-action index
};

struct Partial {
  int count = 0;
  int coverage = 0;
  double cost = 0.0;
  std::vector<Run> runs;
};

bool better(const Partial& a, const Partial& b) {
  if (a.count != b.count) return a.count > b.count;
  if (a.coverage != b.coverage) return a.coverage > b.coverage;
  if (std::abs(a.cost - b.cost) > kCostTie) return a.cost < b.cost;
  return std::lexicographical_compare(a.runs.begin(), a.runs.end(), b.runs.begin(), b.runs.end(),
                                      [](const Run& x, const Run& y) { return x.first < y.first; });
}

}  // namespace

GroundingResult align(const Matrix& cost, double drop, AlignMode mode) {
  GroundingResult out;
  const auto frames = static_cast<int>(cost.rows());
  const auto actions = static_cast<int>(cost.cols());
  const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> ok = cost.array() < drop;

  std::vector<int> kept_frames, kept_actions;
  for (int t = 0; t < frames; ++t) (ok.row(t).any() ? kept_frames : out.dropped_frames).push_back(t);
  for (int n = 0; n < actions; ++n) (ok.col(n).any() ? kept_actions : out.dropped_actions).push_back(n);

  const auto m = static_cast<int>(kept_frames.size());
  const auto k = static_cast<int>(kept_actions.size());
  auto feasible = [&](int i, int j) { return ok(kept_frames[static_cast<std::size_t>(i)], kept_actions[static_cast<std::size_t>(j)]); };
  auto cell = [&](int i, int j) { return cost(kept_frames[static_cast<std::size_t>(i)], kept_actions[static_cast<std::size_t>(j)]); };

  Partial best;
  if (mode == AlignMode::ordered) {
    // table[i][j]: best use of the first i surviving frames and first j surviving actions
    std::vector<std::vector<Partial>> table(static_cast<std::size_t>(m + 1),
                                            std::vector<Partial>(static_cast<std::size_t>(k + 1)));
    for (int i = 1; i <= m; ++i) {
      for (int j = 1; j <= k; ++j) {
        Partial cur = table[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j)];
        const Partial& skip_action = table[static_cast<std::size_t>(i)][static_cast<std::size_t>(j - 1)];
        if (better(skip_action, cur)) cur = skip_action;
        double run_cost = 0.0;
        for (int s = i - 1; s >= 0 && feasible(s, j - 1); --s) {
          run_cost += cell(s, j - 1);
          const Partial& prefix = table[static_cast<std::size_t>(s)][static_cast<std::size_t>(j - 1)];
          Partial cand = prefix;
          cand.count += 1;
          cand.coverage += i - s;
          cand.cost += run_cost;
          cand.runs.push_back({s, i - 1, j - 1});
          if (better(cand, cur)) cur = std::move(cand);
        }
        table[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = std::move(cur);
      }
    }
    best = table[static_cast<std::size_t>(m)][static_cast<std::size_t>(k)];
  } else {
    for (int j = 0; j < k; ++j) {
      std::optional<Run> pick;
      double pick_cost = 0.0;
      for (int s = 0; s < m; ++s) {
        double run_cost = 0.0;
        for (int e = s; e < m && feasible(e, j); ++e) {
          run_cost += cell(e, j);
          if (!pick || run_cost < pick_cost - kCostTie) {
            pick = Run{s, e, j};
            pick_cost = run_cost;
          }
        }
      }
      if (!pick) continue;
      best.count += 1;
      best.coverage += pick->last - pick->first + 1;
      best.cost += pick_cost;
      best.runs.push_back(*pick);
    }
    std::stable_sort(best.runs.begin(), best.runs.end(), [](const Run& a, const Run& b) { return a.first < b.first; });
  }

  std::vector<bool> assigned(static_cast<std::size_t>(k), false);
  for (const auto& r : best.runs) {
    assigned[static_cast<std::size_t>(r.action)] = true;
    out.segments.push_back({kept_frames[static_cast<std::size_t>(r.first)], kept_frames[static_cast<std::size_t>(r.last)],
                            kept_actions[static_cast<std::size_t>(r.action)]});
    std::vector<int> covered;
    for (int i = r.first; i <= r.last; ++i) covered.push_back(kept_frames[static_cast<std::size_t>(i)]);
    out.segment_frames.push_back(std::move(covered));
  }
  for (int j = 0; j < k; ++j) {
    if (!assigned[static_cast<std::size_t>(j)]) out.dropped_actions.push_back(kept_actions[static_cast<std::size_t>(j)]);
  }
  std::sort(out.dropped_actions.begin(), out.dropped_actions.end());
  out.total_cost = best.cost;
  out.coverage = best.coverage;
  return out;
}

std::optional<Sample> emit_pseudo_annotation(const SyntheticVideo& video, const Plan& plan,
                                             const ActionVocabulary& vocab, const GroundingConfig& config,
                                             int source_id) {
  config.validate();
  if (video.frames.empty()) throw Error("empty video", "video has no frames");
  if (plan.actions.empty()) return std::nullopt;
  validate_plan(plan, vocab);

  Matrix frames(vocab.dim(), static_cast<Eigen::Index>(video.frames.size()));
  for (std::size_t t = 0; t < video.frames.size(); ++t) frames.col(static_cast<Eigen::Index>(t)) = video.frames[t];
  Matrix actions(vocab.dim(), plan.horizon());
  for (int n = 0; n < plan.horizon(); ++n) actions.col(n) = vocab.embedding(plan.actions[static_cast<std::size_t>(n)]);

  const Matrix cost = match_cost(frames, actions);
  const GroundingResult g = align(cost, drop_cost(cost, config.perc), config.mode);
  if (g.segments.empty()) return std::nullopt;

  Sample s;
  s.source_id = source_id;
  s.observation = boundary_observation(video.frames, g.segments.front().t_start, g.segments.back().t_end, video.task_id);
  s.plan.task_id = plan.task_id;
  for (const auto& seg : g.segments) s.plan.actions.push_back(plan.actions[static_cast<std::size_t>(seg.action)]);
  return s;
}

std::vector<Sample> emit_pseudo_annotations(const std::vector<SyntheticVideo>& videos, const std::vector<Plan>& plans,
                                            const ActionVocabulary& vocab, const GroundingConfig& config,
                                            int first_source_id) {
  if (videos.size() != plans.size()) throw Error("shape mismatch", "one plan per video is required");
  std::vector<Sample> out;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    if (auto s = emit_pseudo_annotation(videos[i], plans[i], vocab, config, first_source_id + static_cast<int>(i))) {
      out.push_back(std::move(*s));
    }
  }
  return out;
}

}  // namespace rap
