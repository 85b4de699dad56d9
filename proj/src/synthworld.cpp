#include "rap/synthworld.hpp"

#include <array>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace rap {
namespace {

std::string task_name(int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "task%02d", k);
  return buf;
}

std::string action_name(int k, int i) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "task%02d_step%d", k, i);
  return buf;
}

}  // namespace

void WorldConfig::validate() const {
  if (num_tasks < 1) throw Error("invalid world", "num_tasks must be >= 1");
  if (actions_per_task < 2) throw Error("invalid world", "actions_per_task must be >= 2");
  if (d_model < 2) throw Error("invalid world", "d_model must be >= 2");
  if (shared_attributes < 0) throw Error("invalid world", "shared_attributes must be >= 0");
  if (horizon_min < 1 || horizon_max < horizon_min) throw Error("invalid world", "need 1 <= horizon_min <= horizon_max");
  if (skip_probability < 0.0 || skip_probability > 1.0) throw Error("invalid world", "skip_probability not in [0,1]");
  if (max_skip < 0) throw Error("invalid world", "max_skip must be >= 0");
}

int TaskGrammar::position(ActionId a) const {
  auto it = std::find(action_pool.begin(), action_pool.end(), a);
  return it == action_pool.end() ? -1 : static_cast<int>(it - action_pool.begin());
}

const std::vector<ActionId>& TaskGrammar::successors_of(ActionId a) const {
  const int p = position(a);
  if (p < 0) throw Error("unknown action", "action " + std::to_string(a) + " not in grammar of task " + std::to_string(task_id));
  return successors[static_cast<std::size_t>(p)];
}

int TaskGrammar::longest_walk_from(ActionId a) const {
  // Successors always lie later in the pool, so a backward sweep suffices.
  std::vector<int> best(action_pool.size(), 1);
  for (int i = static_cast<int>(action_pool.size()) - 1; i >= 0; --i) {
    for (auto s : successors[static_cast<std::size_t>(i)]) {
      best[static_cast<std::size_t>(i)] =
          std::max(best[static_cast<std::size_t>(i)], 1 + best[static_cast<std::size_t>(position(s))]);
    }
  }
  return best[static_cast<std::size_t>(position(a))];
}

int TaskGrammar::longest_walk() const {
  int best = 0;
  for (auto a : action_pool) best = std::max(best, longest_walk_from(a));
  return best;
}

bool TaskGrammar::allows(ActionId prev, ActionId next) const {
  if (!contains(next)) return false;
  if (prev == ActionVocabulary::kStart) return true;
  const auto& s = successors_of(prev);
  return std::find(s.begin(), s.end(), next) != s.end();
}

World World::generate(const WorldConfig& config, std::uint64_t seed) {
  config.validate();
  World w;
  w.config_ = config;
  w.seed_ = seed;
  Rng rng(seed);

  const int d = config.d_model;
  const int n = config.actions_per_task;

  std::vector<VocabEntry> entries;
  entries.push_back({ActionVocabulary::kStart, ActionVocabulary::kStartName, unit_vector(d, rng)});
  entries.push_back({ActionVocabulary::kEnd, ActionVocabulary::kEndName, unit_vector(d, rng)});
  w.task_of_ = {-1, -1};
  for (int k = 0; k < config.num_tasks; ++k) {
    for (int i = 0; i < n; ++i) {
      const auto id = static_cast<ActionId>(entries.size());
      entries.push_back({id, action_name(k, i), unit_vector(d, rng)});
      w.task_of_.push_back(k);
    }
  }
  w.vocab_ = ActionVocabulary(std::move(entries));

  w.task_embeddings_.resize(d, config.num_tasks);
  for (int k = 0; k < config.num_tasks; ++k) w.task_embeddings_.col(k) = unit_vector(d, rng);

  std::bernoulli_distribution skip(config.skip_probability);
  std::bernoulli_distribution flip(0.5);
  w.shared_flips_.assign(static_cast<std::size_t>(w.vocab_.size()), {});
  for (int k = 0; k < config.num_tasks; ++k) {
    TaskGrammar g;
    g.task_id = k;
    g.name = task_name(k);
    for (int i = 0; i < n; ++i) g.action_pool.push_back(2 + k * n + i);
    g.successors.resize(static_cast<std::size_t>(n));
    for (int i = 0; i + 1 < n; ++i) {
      auto& succ = g.successors[static_cast<std::size_t>(i)];
      succ.push_back(g.action_pool[static_cast<std::size_t>(i + 1)]);
      for (int s = 2; s <= config.max_skip + 1 && i + s < n; ++s) {
        if (skip(rng)) succ.push_back(g.action_pool[static_cast<std::size_t>(i + s)]);
      }
    }
    const int longest = g.longest_walk();
    g.horizon_max = std::min(config.horizon_max, longest);
    g.horizon_min = std::min(config.horizon_min, g.horizon_max);

    Matrix map(d, w.attribute_count());
    for (int i = 0; i < n; ++i) {
      const auto l = w.vocab_.embedding(g.action_pool[static_cast<std::size_t>(i)]);
      map.col(i) = config.attribute_scale * l;
      map.col(n + config.shared_attributes + i) = config.activity_scale * l;
    }
    for (int c = n; c < n + config.shared_attributes; ++c) map.col(c) = config.attribute_scale * unit_vector(d, rng);
    w.maps_.push_back(std::move(map));
    w.offsets_.push_back(config.offset_scale * unit_vector(d, rng));

    for (auto a : g.action_pool) {
      auto& flips = w.shared_flips_[static_cast<std::size_t>(a)];
      for (int c = 0; c < config.shared_attributes; ++c) {
        if (flip(rng)) flips.push_back(n + c);
      }
    }
    w.grammars_.push_back(std::move(g));
  }
  return w;
}

const TaskGrammar& World::grammar(int task_id) const {
  if (task_id < 0 || task_id >= num_tasks()) throw Error("unknown task", "task id " + std::to_string(task_id));
  return grammars_[static_cast<std::size_t>(task_id)];
}

int World::task_of(ActionId a) const {
  if (a < 0 || a >= static_cast<int>(task_of_.size())) throw Error("unknown action", std::to_string(a));
  return task_of_[static_cast<std::size_t>(a)];
}

WorldState World::apply(const WorldState& state, ActionId action) const {
  const auto& g = grammar(state.task_id);
  const int p = g.position(action);
  if (p < 0) throw Error("unknown action", "action " + std::to_string(action) + " is not part of task " + std::to_string(state.task_id));
  const int n = config_.actions_per_task;
  const int activity_base = n + config_.shared_attributes;

  WorldState next = state;
  next.attributes[static_cast<std::size_t>(p)] ^= 1U;
  for (int c : shared_flips_[static_cast<std::size_t>(action)]) next.attributes[static_cast<std::size_t>(c)] ^= 1U;
  for (int i = 0; i < n; ++i) next.attributes[static_cast<std::size_t>(activity_base + i)] = 0;
  next.attributes[static_cast<std::size_t>(activity_base + p)] = 1;
  next.activity = action;
  return next;
}

WorldState World::random_state(int task_id, Rng& rng) const {
  grammar(task_id);
  WorldState s;
  s.task_id = task_id;
  s.attributes.assign(static_cast<std::size_t>(attribute_count()), 0);
  std::bernoulli_distribution coin(0.5);
  for (int i = config_.actions_per_task; i < config_.actions_per_task + config_.shared_attributes; ++i) {
    s.attributes[static_cast<std::size_t>(i)] = coin(rng) ? 1 : 0;
  }
  return s;
}

Vector World::encode(const WorldState& state) const {
  Vector x(attribute_count());
  for (int i = 0; i < attribute_count(); ++i) x(i) = state.attributes[static_cast<std::size_t>(i)];
  return attribute_map(state.task_id) * x + task_offset(state.task_id);
}

Vector World::observe(const WorldState& state, double sigma, Rng& rng) const {
  Vector v = encode(state);
  if (sigma > 0.0) v += gaussian_vector(v.size(), rng, sigma);
  return v;
}

World generate_world(int num_tasks, int actions_per_task, std::uint64_t seed, WorldConfig base) {
  base.num_tasks = num_tasks;
  base.actions_per_task = actions_per_task;
  return World::generate(base, seed);
}

std::vector<ActionId> random_walk(const TaskGrammar& grammar, ActionId previous, int length, Rng& rng) {
  if (length < 1) throw Error("unreachable horizon", "walk length must be >= 1");
  std::vector<ActionId> walk;
  std::vector<ActionId> candidates;
  ActionId prev = previous;
  for (int remaining = length; remaining > 0; --remaining) {
    candidates.clear();
    const auto& pool = (prev == ActionVocabulary::kStart) ? grammar.action_pool : grammar.successors_of(prev);
    for (auto a : pool) {
      if (grammar.longest_walk_from(a) >= remaining) candidates.push_back(a);
    }
    if (candidates.empty()) {
      throw Error("unreachable horizon", "no legal walk of length " + std::to_string(length) + " in " + grammar.name);
    }
    prev = candidates[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(candidates.size()) - 1))];
    walk.push_back(prev);
  }
  return walk;
}

Procedure sample_procedure(const World& world, int task_id, std::optional<int> horizon, double sigma,
                           std::uint64_t seed) {
  const auto& g = world.grammar(task_id);
  Rng rng(seed);
  const int length = horizon ? *horizon : uniform_int(rng, g.horizon_min, g.horizon_max);

  Procedure out;
  out.start_state = world.random_state(task_id, rng);
  const auto walk = random_walk(g, ActionVocabulary::kStart, length, rng);
  out.goal_state = out.start_state;
  for (auto a : walk) out.goal_state = world.apply(out.goal_state, a);

  out.sample.plan = Plan{task_id, walk};
  out.sample.observation.task_id = task_id;
  out.sample.observation.start = world.observe(out.start_state, sigma, rng);
  out.sample.observation.goal = world.observe(out.goal_state, sigma, rng);
  return out;
}

Vector encode_frame_window(std::span<const Vector> frames) {
  if (frames.size() != 3) throw Error("invalid window", "expected exactly 3 frames, got " + std::to_string(frames.size()));
  if (frames[0].size() != frames[1].size() || frames[1].size() != frames[2].size()) {
    throw Error("dimension mismatch", "frames in a window differ in dimension");
  }
  return (frames[0] + frames[1] + frames[2]) / 3.0;
}

SyntheticVideo synthesize_unannotated_video(const World& world, int task_id, const VideoConfig& video,
                                            const Discrepancies& discrepancies, std::uint64_t seed) {
  const auto& g = world.grammar(task_id);
  Rng rng(seed);

  SyntheticVideo out;
  out.task_id = task_id;
  const int lo = video.min_steps > 0 ? std::clamp(video.min_steps, 1, g.horizon_max) : g.horizon_min;
  const int hi = video.max_steps > 0 ? std::clamp(video.max_steps, lo, g.horizon_max) : std::max(lo, g.horizon_max);
  const int length = uniform_int(rng, lo, hi);
  out.nominal_plan = Plan{task_id, random_walk(g, ActionVocabulary::kStart, length, rng)};

  std::vector<ActionId> performed = out.nominal_plan.actions;
  if (discrepancies.missing_step && performed.size() >= 2) {
    const int i = uniform_int(rng, 0, static_cast<int>(performed.size()) - 1);
    performed.erase(performed.begin() + i);
    out.injected.missing_step = true;
  }
  if (discrepancies.extra_step) {
    std::vector<ActionId> unused;
    for (auto a : g.action_pool) {
      if (std::find(out.nominal_plan.actions.begin(), out.nominal_plan.actions.end(), a) == out.nominal_plan.actions.end()) {
        unused.push_back(a);
      }
    }
    if (!unused.empty()) {
      const ActionId extra = unused[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(unused.size()) - 1))];
      auto at = std::find_if(performed.begin(), performed.end(),
                             [&](ActionId a) { return g.position(a) > g.position(extra); });
      performed.insert(at, extra);
      out.injected.extra_step = true;
    }
  }
  if (discrepancies.order_mismatch && performed.size() >= 2) {
    const int i = uniform_int(rng, 0, static_cast<int>(performed.size()) - 2);
    std::swap(performed[static_cast<std::size_t>(i)], performed[static_cast<std::size_t>(i + 1)]);
    out.injected.order_mismatch = true;
  }

  auto distractor = [&] {
    int other = task_id;
    if (world.num_tasks() > 1) {
      other = uniform_int(rng, 0, world.num_tasks() - 2);
      if (other >= task_id) ++other;
    }
    return world.observe(world.random_state(other, rng), video.sigma, rng);
  };
  std::bernoulli_distribution add_distractor(video.distractor_rate);

  WorldState state = world.random_state(task_id, rng);
  const int lead_in = uniform_int(rng, video.min_lead_in, video.max_lead_in);
  for (int i = 0; i < lead_in; ++i) out.frames.push_back(world.observe(state, video.sigma, rng));
  for (auto a : performed) {
    state = world.apply(state, a);
    const int count = uniform_int(rng, video.min_frames_per_step, video.max_frames_per_step);
    Segment seg{static_cast<int>(out.frames.size()), static_cast<int>(out.frames.size()) + count - 1, a};
    for (int i = 0; i < count; ++i) out.frames.push_back(world.observe(state, video.sigma, rng));
    out.segments.push_back(seg);
    if (video.distractor_rate > 0.0 && add_distractor(rng)) out.frames.push_back(distractor());
  }
  return out;
}

Observation boundary_observation(const std::vector<Vector>& frames, int first_frame, int last_frame, int task_id) {
  if (frames.empty()) throw Error("invalid window", "video has no frames");
  const int n = static_cast<int>(frames.size());
  auto at = [&](int t) -> const Vector& { return frames[static_cast<std::size_t>(std::clamp(t, 0, n - 1))]; };
  const std::array<Vector, 3> start{at(first_frame - 3), at(first_frame - 2), at(first_frame - 1)};
  const std::array<Vector, 3> goal{at(last_frame - 2), at(last_frame - 1), at(last_frame)};
  return Observation{encode_frame_window(start), encode_frame_window(goal), task_id};
}

std::vector<Sample> extract_windows(const SourceSequence& source, std::span<const int> horizons) {
  const auto& segs = source.video.segments;
  const int length = static_cast<int>(segs.size());
  std::vector<Sample> out;
  for (int horizon : horizons) {
    for (int i = 0; i + horizon <= length; ++i) {
      Sample s;
      s.source_id = source.source_id;
      s.plan.task_id = source.video.task_id;
      for (int j = i; j < i + horizon; ++j) s.plan.actions.push_back(segs[static_cast<std::size_t>(j)].action);
      s.observation = boundary_observation(source.video.frames, segs[static_cast<std::size_t>(i)].t_start,
                                           segs[static_cast<std::size_t>(i + horizon - 1)].t_end, source.video.task_id);
      out.push_back(std::move(s));
    }
  }
  return out;
}

DatasetSplit make_splits(const std::vector<SourceSequence>& sources, std::span<const int> horizons, double ratio,
                         std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error("invalid split", "ratio must lie in (0, 1)");
  if (sources.empty()) throw Error("invalid split", "no source sequences");
  for (int h : horizons) {
    if (h < 1) throw Error("invalid split", "horizons must be >= 1");
  }

  std::vector<std::size_t> order(sources.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::lround(ratio * static_cast<double>(sources.size())));

  DatasetSplit split;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& src = sources[order[i]];
    auto windows = extract_windows(src, horizons);
    auto& dst = i < n_train ? split.train : split.test;
    (i < n_train ? split.train_sources : split.test_sources).push_back(src.source_id);
    dst.insert(dst.end(), std::make_move_iterator(windows.begin()), std::make_move_iterator(windows.end()));
  }
  return split;
}

}  // namespace rap
