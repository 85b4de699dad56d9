#include "rap/domain.hpp"

#include "rap/edit_distance.hpp"

#include <algorithm>
#include <sstream>

namespace rap {

ActionVocabulary::ActionVocabulary(std::vector<VocabEntry> entries) : entries_(std::move(entries)) {
  if (entries_.size() < 3) throw Error("invalid vocabulary", "need START, END and at least one action");
  const auto dim = entries_.front().embedding.size();
  if (dim == 0) throw Error("invalid vocabulary", "empty embeddings");
  embeddings_.resize(dim, static_cast<Eigen::Index>(entries_.size()));
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.id != static_cast<ActionId>(i)) {
      throw Error("invalid vocabulary", "ids must be dense and ordered; entry " + std::to_string(i) +
                                            " has id " + std::to_string(e.id));
    }
    if (e.embedding.size() != dim) {
      throw Error("invalid vocabulary", "embedding of '" + e.name + "' has dimension " +
                                            std::to_string(e.embedding.size()));
    }
    if (!e.embedding.allFinite()) throw Error("invalid vocabulary", "non-finite embedding for '" + e.name + "'");
    if (!by_name_.emplace(e.name, e.id).second) throw Error("invalid vocabulary", "duplicate name '" + e.name + "'");
    embeddings_.col(e.id) = e.embedding;
  }
  if (entries_[kStart].name != kStartName || entries_[kEnd].name != kEndName) {
    throw Error("invalid vocabulary", "ids 0 and 1 are reserved for START and END");
  }
}

const VocabEntry& ActionVocabulary::entry(ActionId id) const {
  if (id < 0 || id >= size()) throw Error("unknown action", "id " + std::to_string(id) + " out of range");
  return entries_[static_cast<std::size_t>(id)];
}

ActionId ActionVocabulary::lookup(const std::string& name) const {
  if (auto it = by_name_.find(name); it != by_name_.end()) return it->second;

  std::vector<std::pair<std::size_t, const std::string*>> ranked;
  ranked.reserve(entries_.size());
  for (const auto& e : entries_) ranked.emplace_back(levenshtein(name, e.name), &e.name);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::ostringstream msg;
  msg << "'" << name << "' is not registered; nearest:";
  for (std::size_t i = 0; i < std::min<std::size_t>(3, ranked.size()); ++i) msg << " '" << *ranked[i].second << "'";
  throw Error("unknown action", msg.str());
}

std::vector<std::string> ActionVocabulary::names(const std::vector<ActionId>& actions) const {
  std::vector<std::string> out;
  out.reserve(actions.size());
  for (auto a : actions) out.push_back(name(a));
  return out;
}

bool Distribution::is_normalized(double tol) const {
  return (probs.array() >= 0.0).all() && std::abs(probs.sum() - 1.0) <= tol;
}

Vector vocabulary_logits(const Vector& embedding, const ActionVocabulary& vocab) {
  if (embedding.size() != vocab.dim()) {
    throw Error("dimension mismatch", "embedding has dimension " + std::to_string(embedding.size()) +
                                          ", vocabulary " + std::to_string(vocab.dim()));
  }
  Vector logits = vocab.embeddings().transpose() * embedding;
  logits(ActionVocabulary::kStart) = -std::numeric_limits<double>::infinity();
  return logits;
}

NearestAction nearest_action(const Vector& embedding, const ActionVocabulary& vocab) {
  NearestAction out;
  out.distribution.probs = softmax(vocabulary_logits(embedding, vocab));
  out.id = out.distribution.argmax();
  return out;
}

void validate_plan(const Plan& plan, const ActionVocabulary& vocab) {
  for (auto a : plan.actions) {
    if (a == ActionVocabulary::kStart || a == ActionVocabulary::kEnd) {
      throw Error("invalid plan", "plans never store START or END");
    }
    if (a < 0 || a >= vocab.size()) throw Error("invalid plan", "action id " + std::to_string(a) + " out of range");
  }
}

}  // namespace rap
