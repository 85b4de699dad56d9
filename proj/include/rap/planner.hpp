#pragma once

#include "rap/domain.hpp"
#include "rap/nn/optim.hpp"
#include "rap/nn/parameters.hpp"
#include "rap/nn/transformer.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace rap {

enum class DecodeMode { adaptive, fixed };

struct PlannerConfig {
  int layers = 2;
  int heads = 2;
  int d_model = 32;
  int mlp_ratio = 4;
  /// Longest plan the decoder may emit; also sizes the positional tables.
  int max_decode_length = 14;
  DecodeMode mode = DecodeMode::adaptive;
  int fixed_horizon = 3;
  /// Feed back the raw predicted embedding instead of the chosen action's
  /// vocabulary embedding.
  bool raw_feedback = false;
  double head_init = 0.02;

  void validate() const;
};

// ---- task classifier ----------------------------------------------------------

struct ClassifierConfig {
  int hidden = 64;
  nn::FitConfig fit{40, 32, {}, {}, 0, false};
  double validation_fraction = 0.1;
};

/// MLP over concat(v_s, v_g) producing task logits, plus the per-task
/// embedding table that supplies c-hat for the predicted class.
class TaskClassifier {
 public:
  struct Prediction {
    int task_id = 0;
    Vector embedding;
  };

  TaskClassifier() = default;
  TaskClassifier(int d_model, Matrix task_embeddings, int hidden, std::uint64_t seed);

  int num_tasks() const { return static_cast<int>(task_embeddings_.cols()); }
  int d_model() const { return static_cast<int>(task_embeddings_.rows()); }
  int hidden() const { return hidden_; }
  const Matrix& task_embeddings() const { return task_embeddings_; }
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }

  Vector logits(const Vector& start, const Vector& goal) const;
  /// Argmax class (ties to the lowest id) and its embedding-table row.
  Prediction classify(const Vector& start, const Vector& goal) const;
  /// Cross-entropy against `task_id`; accumulates gradients when asked.
  double loss(const Observation& obs, int task_id, bool accumulate);

 private:
  Matrix task_embeddings_;
  int hidden_ = 0;
  nn::ParameterStore params_;
  nn::ParamId w1_, b1_, w2_, b2_;
};

TaskClassifier train_task_classifier(const std::vector<Sample>& train, const Matrix& task_embeddings,
                                     const ClassifierConfig& config, std::uint64_t seed);
double classifier_accuracy(const TaskClassifier& classifier, const std::vector<Sample>& samples);

// ---- decoding -----------------------------------------------------------------

struct StepTrace {
  Vector predicted;  // l-hat from the base planner
  Distribution base;
  std::optional<Distribution> retrieval;
  std::optional<Distribution> combined;
  ActionId chosen = ActionVocabulary::kEnd;

  const Distribution& final_distribution() const { return combined ? *combined : base; }
};

struct DecodeOptions {
  DecodeMode mode = DecodeMode::adaptive;
  int fixed_horizon = 3;
  int max_length = 14;
  bool raw_feedback = false;
  bool keep_trace = false;
};

struct DecodeResult {
  Plan plan;
  bool degenerate = false;  // END was the first prediction
  bool truncated = false;   // hit max_length without END
  std::vector<StepTrace> trace;
};

/// Produces the next-step trace given the embeddings fed so far (l_1..l_t).
using StepFunction = std::function<StepTrace(const std::vector<Vector>& fed)>;

/// Greedy decoding shared by the base and retrieval planners. Adaptive mode
/// stops at END or max_length; fixed mode masks END and stops after exactly
/// fixed_horizon steps.
DecodeResult greedy_decode(const StepFunction& step, const ActionVocabulary& vocab, int task_id,
                           const DecodeOptions& options);

// ---- base planner -------------------------------------------------------------

/// Autoregressive planner over the token sequence
///   [v_s, v_g, c-hat, l_START, l_1 + p_1, ..., l_k + p_k]
/// whose outputs at the last k+1 positions are the predicted step embeddings
/// l-hat_1 .. l-hat_{k+1}.
class BasePlanner {
 public:
  struct Forward {
    Matrix tokens;
    Matrix features;   // transformer output at the prediction positions
    Matrix predicted;  // d x (k+1)
    nn::CausalTransformer::Cache cache;
  };

  BasePlanner() = default;
  BasePlanner(const PlannerConfig& config, ActionVocabulary vocab, std::uint64_t seed);

  const PlannerConfig& config() const { return config_; }
  const ActionVocabulary& vocab() const { return vocab_; }
  nn::ParameterStore& params() { return params_; }
  const nn::ParameterStore& params() const { return params_; }
  Vector start_embedding() const { return params_.value(start_).col(0); }
  nn::ParamId start_param() const { return start_; }

  Matrix tokens(const Vector& start, const Vector& goal, const Vector& task, const std::vector<Vector>& steps) const;
  Forward forward(const Vector& start, const Vector& goal, const Vector& task, const std::vector<Vector>& steps) const;
  /// Accumulates gradients given d loss / d predicted.
  void backward(const Forward& fwd, const Matrix& d_predicted);

  Distribution distribution(const Vector& predicted) const;

  /// Teacher-forced contrastive loss summed over the T+1 positions (END last).
  /// `correct` receives the number of positions whose argmax is the target.
  double stage1_loss(const Sample& sample, const Vector& task_embedding, bool accumulate, int* correct = nullptr);

  DecodeOptions decode_options() const;
  StepTrace step(const Vector& start, const Vector& goal, const Vector& task, const std::vector<Vector>& fed) const;
  DecodeResult decode(const Vector& start, const Vector& goal, const TaskClassifier::Prediction& task,
                      const DecodeOptions& options) const;

  /// Step embeddings for a ground-truth plan (teacher forcing).
  std::vector<Vector> teacher_inputs(const Plan& plan) const;

 private:
  PlannerConfig config_;
  ActionVocabulary vocab_;
  nn::ParameterStore params_;
  nn::CausalTransformer transformer_;
  nn::ParamId start_, positions_, head_w_, head_b_;
};

DecodeResult decode_plan(const BasePlanner& planner, const TaskClassifier& classifier, const Vector& start,
                         const Vector& goal, const DecodeOptions& options);

// ---- stage-1 training ----------------------------------------------------------

struct TrainConfig {
  nn::FitConfig fit;
  double validation_fraction = 0.1;
};

struct ValidationSplit {
  std::vector<int> train;
  std::vector<int> validation;
};

/// Holds out round(fraction * #sources) whole source sequences.
ValidationSplit carve_validation(const std::vector<Sample>& samples, double fraction, std::uint64_t seed);

/// c-hat for each sample, from the frozen classifier.
std::vector<Vector> predicted_task_embeddings(const TaskClassifier& classifier, const std::vector<Sample>& samples);

/// Minimizes the contrastive step loss. Pseudo-annotated samples join the
/// training side with equal weight and never enter validation.
nn::FitResult stage1_train(BasePlanner& planner, const TaskClassifier& classifier, const std::vector<Sample>& train,
                           const std::vector<Sample>& pseudo, const TrainConfig& config);

/// Fraction of teacher-forced positions (incl. END) predicted correctly.
double teacher_forced_accuracy(BasePlanner& planner, const TaskClassifier& classifier,
                               const std::vector<Sample>& samples);

}  // namespace rap
