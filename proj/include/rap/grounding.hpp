#pragma once

#include "rap/domain.hpp"
#include "rap/synthworld.hpp"

#include <optional>
#include <vector>

namespace rap {

enum class AlignMode {
  ordered,  // ordered runs, max actions, then max coverage, then min cost
  literal,  // each action independently takes its cheapest feasible run
};

struct GroundingConfig {
  double perc = 15.0;
  AlignMode mode = AlignMode::ordered;

  void validate() const;
};

struct GroundedSegment {
  int t_start = 0;  // original frame indices
  int t_end = 0;
  int action = 0;   // column of the cost matrix (plan position)
  friend bool operator==(const GroundedSegment&, const GroundedSegment&) = default;
};

struct GroundingResult {
  std::vector<GroundedSegment> segments;
  std::vector<int> dropped_frames;
  std::vector<int> dropped_actions;
  std::vector<std::vector<int>> segment_frames;  // surviving frames covered by each segment
  double total_cost = 0.0;
  int coverage = 0;
};

/// T x N matrix of 1 - cos(frame_t, action_n). Frames and actions are columns.
Matrix match_cost(const Matrix& frames, const Matrix& actions);

/// Nearest-rank percentile of all entries: the ceil(perc/100 * |C|)-th smallest.
double drop_cost(const Matrix& cost, double perc);

GroundingResult align(const Matrix& cost, double drop, AlignMode mode = AlignMode::ordered);

/// Grounds `plan` in `video` and turns the surviving actions into one training
/// sample; nullopt when nothing survives.
std::optional<Sample> emit_pseudo_annotation(const SyntheticVideo& video, const Plan& plan,
                                             const ActionVocabulary& vocab, const GroundingConfig& config,
                                             int source_id);

std::vector<Sample> emit_pseudo_annotations(const std::vector<SyntheticVideo>& videos, const std::vector<Plan>& plans,
                                            const ActionVocabulary& vocab, const GroundingConfig& config,
                                            int first_source_id = 0);

}  // namespace rap
