#pragma once

// Experiment orchestration: configuration, data generation, the two training
// stages, evaluation, reports, sweeps and run manifests.

#include "rap/dataio.hpp"
#include "rap/grounding.hpp"
#include "rap/metrics.hpp"
#include "rap/nn/checkpoint.hpp"
#include "rap/planner.hpp"
#include "rap/retrieval.hpp"
#include "rap/synthworld.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rap {

/// Unannotated footage: distractor frames and walks over the test horizons.
VideoConfig default_unannotated_video();

struct ExperimentConfig {
  std::string preset = "crosstask-like";
  std::uint64_t seed = 0;

  WorldConfig world;
  int sources_per_task = 40;
  std::vector<int> horizons{3, 4, 5, 6};
  double split_ratio = 0.7;
  VideoConfig annotated;

  int unannotated_per_task = 10;
  VideoConfig unannotated = default_unannotated_video();
  double discrepancy_probability = 0.3;  // per discrepancy type
  double pseudo_fraction = 0.0;          // percent of unannotated videos grounded
  GroundingConfig grounding;

  PlannerConfig planner;
  ClassifierConfig classifier;
  RetrievalConfig retrieval;

  nn::AdamWConfig optimizer;
  nn::PlateauConfig scheduler;
  int batch_size = 32;
  int stage1_epochs = 200;
  int stage2_epochs = 150;
  double stage2_lr = 1e-4;
  double epoch_scale = 0.25;
  double validation_fraction = 0.1;

  void validate() const;
  int scaled_stage1_epochs() const;
  int scaled_stage2_epochs() const;

  static ExperimentConfig preset_named(const std::string& name);
};

Json to_json(const ExperimentConfig& config);
/// Starts from the preset named in `j` (default crosstask-like) and applies
/// every field present.
ExperimentConfig config_from_json(const Json& j);
/// FNV-1a over the canonical (sorted-key) JSON dump.
std::uint64_t config_hash(const ExperimentConfig& config);

// ---- data ----

struct GeneratedData {
  World world;
  std::vector<SourceSequence> sources;
  DatasetSplit split;
  std::vector<SyntheticVideo> videos;  // unannotated
  std::vector<Plan> plans;             // topic-level plan per video
};

GeneratedData generate_data(const ExperimentConfig& config);
void write_data(const GeneratedData& data, const std::filesystem::path& dir);

/// Grounds the first pseudo_fraction% of each task's unannotated videos.
std::vector<Sample> ground_videos(const std::vector<SyntheticVideo>& videos, const std::vector<Plan>& plans,
                                  const ActionVocabulary& vocab, const GroundingConfig& grounding,
                                  double pseudo_fraction, int first_source_id);

// ---- models ----

struct ModelBundle {
  int stage = 1;
  ActionVocabulary vocab;
  TaskClassifier classifier;
  BasePlanner base;
  std::optional<RetrievalPlanner> rap;

  DecodeOptions decode_options() const { return base.decode_options(); }
  DecodeResult decode(const Observation& obs) const;
};

struct StageResult {
  ModelBundle bundle;
  nn::FitResult fit;
};

StageResult train_stage1(const ExperimentConfig& config, const ActionVocabulary& vocab, const Matrix& task_embeddings,
                         const std::vector<Sample>& train, const std::vector<Sample>& pseudo);
StageResult train_stage2(const ExperimentConfig& config, const ModelBundle& stage1, const std::vector<Sample>& train,
                         const std::vector<Sample>& pseudo);

nn::Checkpoint to_checkpoint(const ModelBundle& bundle, const ExperimentConfig& config);
ModelBundle bundle_from_checkpoint(const nn::Checkpoint& ckpt);
/// Reads the experiment config stored alongside the model.
ExperimentConfig config_from_checkpoint(const nn::Checkpoint& ckpt);

std::vector<Plan> plan_samples(const ModelBundle& bundle, const std::vector<Sample>& samples);
MetricsReport evaluate(const ModelBundle& bundle, const std::vector<Sample>& samples);

// ---- pipeline ----

struct StageRecord {
  std::string name;
  std::string status;  // complete | skipped | failed
  double seconds = 0;
};

struct RunManifest {
  std::string config_hash;
  std::vector<StageRecord> stages;
  std::vector<std::pair<std::string, std::string>> artifacts;  // file -> content id
  double total_seconds = 0;
  bool complete = false;
};

Json to_json(const RunManifest& manifest);

/// gen-data, ground, stage 1, stage 2, eval, report. Writes every artifact plus
/// manifest.json into `out`; on failure the partial manifest is written and
/// the error rethrown.
RunManifest run_pipeline(const ExperimentConfig& config, const std::filesystem::path& out);

/// BP vs RAP rows from a pipeline report.
Json compare_rows(const Json& report);
Json compare_bp_rap(const ExperimentConfig& config, const std::filesystem::path& out);

enum class SweepAxis { layers_heads, memory_size, lambda, pseudo_fraction };
SweepAxis parse_sweep_axis(const std::string& name);
std::string axis_name(SweepAxis axis);
/// One pipeline per value; rows carry the RAP and BP metrics.
Json sweep(const ExperimentConfig& config, SweepAxis axis, const std::vector<std::string>& values,
           const std::filesystem::path& out);

std::string render_table(const Json& report);
std::string render_csv(const Json& report);

}  // namespace rap
