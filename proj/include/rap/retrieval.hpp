#pragma once

#include "rap/domain.hpp"
#include "rap/planner.hpp"

#include <cstdint>
#include <vector>

namespace rap {

struct RetrievalConfig {
  int memory_size = 200;  // D
  int top_k = 10;         // K
  double lambda = 0.1;
  double temperature = 1.0;

  void validate() const;
};

/// Key/value datastore. Keys are columns (d_key x D); values are action ids.
struct MemoryStore {
  Matrix keys;
  std::vector<ActionId> values;
  int top_k = 10;
  double lambda = 0.1;
  double temperature = 1.0;

  int size() const { return static_cast<int>(values.size()); }
  int key_dim() const { return static_cast<int>(keys.rows()); }
  void validate(int vocab_size) const;
};

/// Balanced values (round-robin over every non-START id, END included, then
/// shuffled) and unit-norm Gaussian keys of width vocab.dim().
MemoryStore build_memory(const ActionVocabulary& vocab, const RetrievalConfig& config, std::uint64_t seed);

/// Per-action occurrence counts among the memory values, indexed by id.
std::vector<int> value_counts(const MemoryStore& memory, int vocab_size);

struct Retrieved {
  Distribution distribution;
  std::vector<int> indices;  // memory slots, best first
  Vector similarities;       // cosine per retrieved slot
  Vector weights;            // softmax(similarities / temperature)
};

/// Exact top-K by cosine similarity (ties to the lowest slot), softmax over the
/// K similarities, mass aggregated per value.
Retrieved retrieve(const Matrix& keys, const std::vector<ActionId>& values, int top_k, double temperature,
                   const Vector& query, int vocab_size);
Retrieved retrieve(const MemoryStore& memory, const Vector& query, int vocab_size);

/// Same aggregation over a caller-chosen slot set (used to freeze top-K).
Retrieved retrieve_slots(const Matrix& keys, const std::vector<ActionId>& values, const std::vector<int>& slots,
                         double temperature, const Vector& query, int vocab_size);

/// lambda * retr + (1 - lambda) * base.
Distribution interpolate(const Distribution& retr, const Distribution& base, double lambda);

/// d cos(a, b) / d a.
Vector cosine_gradient(const Vector& a, const Vector& b);

/// Two-layer MLP f_Proj over concat(v_s, v_g, c-hat, l_t + q_t) with its
/// positional table q. Parameters live in the owning planner's store.
class ContextProjection {
 public:
  struct Cache {
    Matrix input;  // 4d x 1
    Matrix pre;    // 2d x 1
    Matrix hidden;
  };

  ContextProjection() = default;
  ContextProjection(nn::ParameterStore& store, int d_model, int positions, Rng& rng);

  int positions() const { return positions_; }
  int d_model() const { return d_model_; }

  Vector forward(const nn::ParameterStore& store, const Vector& start, const Vector& goal, const Vector& task,
                 const Vector& step, int t, Cache* cache = nullptr) const;
  /// Accumulates parameter gradients (incl. q_t) and returns d/d step.
  Vector backward(nn::ParameterStore& store, const Cache& cache, int t, const Vector& d_out,
                  Matrix* d_input = nullptr) const;

 private:
  int d_model_ = 0;
  int positions_ = 0;
  nn::ParamId w1_, b1_, w2_, b2_, q_;
};

/// Base planner plus context projection and learnable keys, all in one store.
class RetrievalPlanner {
 public:
  struct StepLoss {
    double loss = 0;
    std::vector<std::vector<int>> retrieved;  // per position
  };

  RetrievalPlanner() = default;
  /// Wraps a (stage-1 trained) base planner.
  RetrievalPlanner(BasePlanner base, const RetrievalConfig& config, std::uint64_t seed);

  const RetrievalConfig& config() const { return config_; }
  const BasePlanner& base() const { return base_; }
  BasePlanner& base() { return base_; }
  nn::ParameterStore& params() { return base_.params(); }
  const nn::ParameterStore& params() const { return base_.params(); }
  const ContextProjection& projection() const { return projection_; }
  const Matrix& keys() const { return params()[keys_].value; }
  nn::ParamId keys_param() const { return keys_; }
  const std::vector<ActionId>& values() const { return values_; }
  MemoryStore memory() const;
  void set_lambda(double lambda);

  /// Query vector for position t given the previous step embedding l_t
  /// (l_0 is the learned START embedding).
  Vector context(const Vector& start, const Vector& goal, const Vector& task, const Vector& step, int t) const;

  /// Teacher-forced -sum_t log P_all(a_t). `frozen` pins the retrieved slot
  /// sets per position (finite-difference checks).
  StepLoss stage2_loss(const Sample& sample, const Vector& task_embedding, bool accumulate,
                       const std::vector<std::vector<int>>* frozen = nullptr, int* correct = nullptr);

  StepTrace step(const Vector& start, const Vector& goal, const Vector& task, const std::vector<Vector>& fed) const;
  DecodeResult decode(const Vector& start, const Vector& goal, const TaskClassifier::Prediction& task,
                      const DecodeOptions& options) const;

  /// Replaces the memory values (checkpoint restore). Sizes must agree.
  void set_values(std::vector<ActionId> values);

 private:
  BasePlanner base_;
  RetrievalConfig config_;
  ContextProjection projection_;
  nn::ParamId keys_;
  std::vector<ActionId> values_;
};

DecodeResult decode_plan(const RetrievalPlanner& planner, const TaskClassifier& classifier, const Vector& start,
                         const Vector& goal, const DecodeOptions& options);

/// Joint cross-entropy over base, projection, q and keys.
nn::FitResult stage2_train(RetrievalPlanner& planner, const TaskClassifier& classifier, const std::vector<Sample>& train,
                           const std::vector<Sample>& pseudo, const TrainConfig& config);

}  // namespace rap
