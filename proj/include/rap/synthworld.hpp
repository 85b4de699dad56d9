#pragma once

// Synthetic task-grammar world. Each task owns an ordered pool of actions and
// a successor table; a walk is a legal action sequence. World states are
// binary attribute vectors laid out as
//
//   [ done bits (one per pool action) | shared bits | activity one-hot ]
//
// Performing pool action i flips done bit i plus a fixed subset of the shared
// bits, and moves the activity one-hot to i. Observations are a per-task
// linear image of the attribute vector plus Gaussian noise. The done and
// activity columns of that map are scaled language embeddings, so frames
// recorded while an action is under way look like the action's description;
// the shared columns are random.

#include "rap/domain.hpp"
#include "rap/random.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace rap {

struct WorldConfig {
  int num_tasks = 18;
  int actions_per_task = 7;
  int d_model = 32;
  int shared_attributes = 4;
  int horizon_min = 4;
  int horizon_max = 7;
  double attribute_scale = 0.6;
  double activity_scale = 1.5;
  double offset_scale = 1.0;
  /// Probability that each pool action may skip ahead to a later action.
  double skip_probability = 0.5;
  int max_skip = 2;

  void validate() const;
};

class TaskGrammar {
 public:
  int task_id = 0;
  std::string name;
  std::vector<ActionId> action_pool;  // canonical order
  /// successors[i] lists legal successors of action_pool[i] (pool positions > i).
  std::vector<std::vector<ActionId>> successors;
  int horizon_min = 1;
  int horizon_max = 1;

  int position(ActionId a) const;  // -1 when a is not in the pool
  bool contains(ActionId a) const { return position(a) >= 0; }
  const std::vector<ActionId>& successors_of(ActionId a) const;
  /// Number of actions in the longest legal walk starting with `a`.
  int longest_walk_from(ActionId a) const;
  int longest_walk() const;
  /// Whether `next` may follow `prev`; prev == kStart means "no action yet".
  bool allows(ActionId prev, ActionId next) const;
};

struct WorldState {
  int task_id = 0;
  std::vector<std::uint8_t> attributes;
  ActionId activity = ActionVocabulary::kStart;  // kStart: idle

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

class World {
 public:
  static World generate(const WorldConfig& config, std::uint64_t seed);

  const WorldConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  const ActionVocabulary& vocab() const { return vocab_; }
  const std::vector<TaskGrammar>& grammars() const { return grammars_; }
  const TaskGrammar& grammar(int task_id) const;
  int num_tasks() const { return static_cast<int>(grammars_.size()); }
  /// d x num_tasks; column k is the language embedding of task k's title.
  const Matrix& task_embeddings() const { return task_embeddings_; }
  int task_of(ActionId a) const;

  int attribute_count() const { return 2 * config_.actions_per_task + config_.shared_attributes; }
  const Matrix& attribute_map(int task_id) const { return maps_.at(static_cast<std::size_t>(task_id)); }
  const Vector& task_offset(int task_id) const { return offsets_.at(static_cast<std::size_t>(task_id)); }

  WorldState apply(const WorldState& state, ActionId action) const;
  /// Nothing done yet, idle, random shared bits.
  WorldState random_state(int task_id, Rng& rng) const;
  /// Noise-free observation embedding of a state.
  Vector encode(const WorldState& state) const;
  Vector observe(const WorldState& state, double sigma, Rng& rng) const;

 private:
  WorldConfig config_;
  std::uint64_t seed_ = 0;
  ActionVocabulary vocab_;
  std::vector<TaskGrammar> grammars_;
  Matrix task_embeddings_;
  std::vector<Matrix> maps_;
  std::vector<Vector> offsets_;
  std::vector<std::vector<int>> shared_flips_;  // by action id
  std::vector<int> task_of_;                    // by action id, -1 for reserved
};

World generate_world(int num_tasks, int actions_per_task, std::uint64_t seed, WorldConfig base = {});

/// Draws a legal walk of exactly `length` actions whose first action may follow
/// `previous`. Throws "unreachable horizon" when no such walk exists.
std::vector<ActionId> random_walk(const TaskGrammar& grammar, ActionId previous, int length, Rng& rng);

struct Procedure {
  Sample sample;
  WorldState start_state;
  WorldState goal_state;
};

/// Samples one (observation, plan) pair. `horizon` empty means variable: a
/// length drawn uniformly from the grammar's horizon range.
Procedure sample_procedure(const World& world, int task_id, std::optional<int> horizon, double sigma,
                           std::uint64_t seed);

/// Mean of exactly three frame embeddings.
Vector encode_frame_window(std::span<const Vector> frames);

struct Segment {
  int t_start = 0;
  int t_end = 0;
  ActionId action = 0;
  friend bool operator==(const Segment&, const Segment&) = default;
};

struct Discrepancies {
  bool missing_step = false;    // nominal plan lists an action the video never shows
  bool order_mismatch = false;  // video performs two adjacent steps swapped
  bool extra_step = false;      // video shows an action the nominal plan omits
  friend bool operator==(const Discrepancies&, const Discrepancies&) = default;
};

struct VideoConfig {
  double sigma = 0.1;
  int min_frames_per_step = 2;
  int max_frames_per_step = 4;
  int min_lead_in = 1;
  int max_lead_in = 2;
  /// Probability of a distractor frame after each segment.
  double distractor_rate = 0.0;
  /// Walk length range; 0 means the grammar's own bound.
  int min_steps = 0;
  int max_steps = 0;
};

struct SyntheticVideo {
  int task_id = 0;
  std::vector<Vector> frames;
  std::vector<Segment> segments;  // hidden ground truth, ordered
  Plan nominal_plan;
  Discrepancies injected;         // what was actually applied
};

/// Renders a walk as a video. The nominal plan is a legal walk; the performed
/// walk differs from it exactly by the requested (and applicable) discrepancies.
SyntheticVideo synthesize_unannotated_video(const World& world, int task_id, const VideoConfig& video,
                                            const Discrepancies& discrepancies, std::uint64_t seed);

/// Start/goal observation for the sub-plan covering segments [first, last].
/// The start window is the three frames ending just before the first segment,
/// the goal window the three frames ending at the last segment's final frame;
/// both are clamped to the video.
Observation boundary_observation(const std::vector<Vector>& frames, int first_frame, int last_frame, int task_id);

struct SourceSequence {
  int source_id = 0;
  SyntheticVideo video;
};

struct DatasetSplit {
  std::vector<Sample> train;
  std::vector<Sample> test;
  std::vector<int> train_sources;
  std::vector<int> test_sources;
};

/// Number of length-T contiguous windows in a length-L sequence.
constexpr int window_count(int length, int horizon) { return horizon <= length ? length - horizon + 1 : 0; }

/// All contiguous sub-plans of the given horizons, observed through the
/// source video's frames around the true segment boundaries.
std::vector<Sample> extract_windows(const SourceSequence& source, std::span<const int> horizons);

/// Splits at the source level (round(ratio * n) sources for training), then
/// extracts moving windows from each side.
DatasetSplit make_splits(const std::vector<SourceSequence>& sources, std::span<const int> horizons, double ratio,
                         std::uint64_t seed);

}  // namespace rap
