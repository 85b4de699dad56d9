#pragma once

#include "rap/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace rap {

using ActionId = int;

/// Cosine similarity a.b / (|a||b|). Throws "degenerate embedding" when either
/// operand has zero norm.
template <typename DerivedA, typename DerivedB>
double cosine_similarity(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) {
    throw Error("dimension mismatch", "cosine_similarity of sizes " + std::to_string(a.size()) +
                                          " and " + std::to_string(b.size()));
  }
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw Error("degenerate embedding", "zero-norm vector in cosine_similarity");
  const double c = a.dot(b) / (na * nb);
  return std::clamp(c, -1.0, 1.0);
}

/// Numerically stable softmax. Entries equal to -inf receive exactly zero mass.
template <typename Derived>
VectorX<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Scalar peak = logits.maxCoeff();
  VectorX<Scalar> p = (logits.array() - peak).exp().matrix();
  p = (logits.array() == -std::numeric_limits<Scalar>::infinity()).select(Scalar(0), p);
  return p / p.sum();
}

template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& logits) {
  const auto peak = logits.maxCoeff();
  return peak + std::log((logits.array() - peak).exp().sum());
}

/// Index of the largest entry; ties resolve to the lowest index.
template <typename Derived>
Eigen::Index argmax_lowest(const Eigen::MatrixBase<Derived>& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = i;
  }
  return best;
}

struct VocabEntry {
  ActionId id = 0;
  std::string name;
  Vector embedding;
};

/// The action vocabulary V_a plus the two reserved tokens. START is id 0 and is
/// never scored; END is id 1 and is an ordinary prediction target.
class ActionVocabulary {
 public:
  static constexpr ActionId kStart = 0;
  static constexpr ActionId kEnd = 1;
  static constexpr const char* kStartName = "START";
  static constexpr const char* kEndName = "END";

  ActionVocabulary() = default;
  explicit ActionVocabulary(std::vector<VocabEntry> entries);

  int size() const { return static_cast<int>(entries_.size()); }
  int dim() const { return static_cast<int>(embeddings_.rows()); }

  const VocabEntry& entry(ActionId id) const;
  const std::string& name(ActionId id) const { return entry(id).name; }
  ActionId lookup(const std::string& name) const;
  bool contains(const std::string& name) const { return by_name_.contains(name); }

  /// d x |V| matrix; column j is the language embedding of action j.
  const Matrix& embeddings() const { return embeddings_; }
  auto embedding(ActionId id) const { return embeddings_.col(id); }

  const std::vector<VocabEntry>& entries() const { return entries_; }

  /// Returns `actions` rendered as names.
  std::vector<std::string> names(const std::vector<ActionId>& actions) const;

 private:
  std::vector<VocabEntry> entries_;
  Matrix embeddings_;
  std::unordered_map<std::string, ActionId> by_name_;
};

/// Probability vector indexed by action id. START always carries zero mass.
struct Distribution {
  Vector probs;

  double operator[](ActionId id) const { return probs(id); }
  int size() const { return static_cast<int>(probs.size()); }
  ActionId argmax() const { return static_cast<ActionId>(argmax_lowest(probs)); }
  bool is_normalized(double tol = 1e-9) const;
};

struct Plan {
  int task_id = 0;
  std::vector<ActionId> actions;

  int horizon() const { return static_cast<int>(actions.size()); }
  friend bool operator==(const Plan&, const Plan&) = default;
};

struct Observation {
  Vector start;  // v_s
  Vector goal;   // v_g
  int task_id = 0;
};

struct Sample {
  Observation observation;
  Plan plan;
  int source_id = 0;
};

/// Scores every vocabulary entry (START excluded) by its dot product with
/// `embedding` and softmaxes the scores.
struct NearestAction {
  ActionId id = ActionVocabulary::kEnd;
  Distribution distribution;
};

/// Logits over the vocabulary: <embedding, l_j>, with START pinned to -inf.
Vector vocabulary_logits(const Vector& embedding, const ActionVocabulary& vocab);

NearestAction nearest_action(const Vector& embedding, const ActionVocabulary& vocab);

/// Throws unless `plan` is free of reserved ids and every id is in range.
void validate_plan(const Plan& plan, const ActionVocabulary& vocab);

}  // namespace rap
