#include "rap/retrieval.hpp"

#include "rap/nn/kernels.hpp"
#include "rap/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rap {

void RetrievalConfig::validate() const {
  if (memory_size < 1) throw Error("invalid config", "memory_size must be positive");
  if (top_k < 1 || top_k > memory_size) throw Error("invalid config", "top_k must lie in [1, memory_size]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error("invalid config", "lambda must lie in [0, 1]");
  if (!(temperature > 0.0)) throw Error("invalid config", "temperature must be positive");
}

void MemoryStore::validate(int vocab_size) const {
  if (keys.cols() != size()) throw Error("invalid memory", "keys and values differ in count");
  if (top_k < 1 || top_k > size()) throw Error("invalid memory", "top_k must lie in [1, D]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error("invalid memory", "lambda must lie in [0, 1]");
  for (auto v : values) {
    if (v <= ActionVocabulary::kStart || v >= vocab_size) throw Error("invalid memory", "value id out of range");
  }
}

MemoryStore build_memory(const ActionVocabulary& vocab, const RetrievalConfig& config, std::uint64_t seed) {
  const int actions = vocab.size() - 1;
  if (config.memory_size < actions) {
    throw Error("memory smaller than vocabulary", "D = " + std::to_string(config.memory_size) + " < |V_a| = " +
                                                      std::to_string(actions));
  }
  config.validate();
  Rng rng(seed);
  MemoryStore m;
  m.top_k = config.top_k;
  m.lambda = config.lambda;
  m.temperature = config.temperature;
  m.values.resize(static_cast<std::size_t>(config.memory_size));
  for (int n = 0; n < config.memory_size; ++n) m.values[static_cast<std::size_t>(n)] = 1 + n % actions;
  std::shuffle(m.values.begin(), m.values.end(), rng);
  m.keys = gaussian_matrix(vocab.dim(), config.memory_size, rng);
  m.keys.colwise().normalize();
  return m;
}

std::vector<int> value_counts(const MemoryStore& memory, int vocab_size) {
  std::vector<int> counts(static_cast<std::size_t>(vocab_size), 0);
  for (auto v : memory.values) ++counts.at(static_cast<std::size_t>(v));
  return counts;
}

Retrieved retrieve_slots(const Matrix& keys, const std::vector<ActionId>& values, const std::vector<int>& slots,
                         double temperature, const Vector& query, int vocab_size) {
  Retrieved r;
  r.indices = slots;
  r.similarities.resize(static_cast<Eigen::Index>(slots.size()));
  for (std::size_t i = 0; i < slots.size(); ++i) {
    r.similarities(static_cast<Eigen::Index>(i)) = cosine_similarity(query, keys.col(slots[i]));
  }
  r.weights = softmax(r.similarities / temperature);
  r.distribution.probs = Vector::Zero(vocab_size);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    r.distribution.probs(values[static_cast<std::size_t>(slots[i])]) += r.weights(static_cast<Eigen::Index>(i));
  }
  return r;
}

Retrieved retrieve(const Matrix& keys, const std::vector<ActionId>& values, int top_k, double temperature,
                   const Vector& query, int vocab_size) {
  const auto n = static_cast<int>(values.size());
  if (keys.cols() != n) throw Error("invalid memory", "keys and values differ in count");
  if (top_k < 1 || top_k > n) throw Error("invalid memory", "top_k must lie in [1, D]");
  if (query.size() != keys.rows()) throw Error("dimension mismatch", "query width differs from key width");
  const double qn = query.norm();
  if (qn == 0.0) throw Error("degenerate embedding", "zero-norm query");

  const Vector norms = keys.colwise().norm().transpose();
  if ((norms.array() == 0.0).any()) throw Error("degenerate embedding", "zero-norm memory key");
  const Vector sims = ((keys.transpose() * query).array() / (norms.array() * qn)).cwiseMax(-1.0).cwiseMin(1.0);

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + top_k, order.end(), [&](int a, int b) {
    return sims(a) > sims(b) || (sims(a) == sims(b) && a < b);
  });
  order.resize(static_cast<std::size_t>(top_k));
  return retrieve_slots(keys, values, order, temperature, query, vocab_size);
}

Retrieved retrieve(const MemoryStore& memory, const Vector& query, int vocab_size) {
  return retrieve(memory.keys, memory.values, memory.top_k, memory.temperature, query, vocab_size);
}

Distribution interpolate(const Distribution& retr, const Distribution& base, double lambda) {
  if (retr.size() != base.size()) throw Error("vocabulary mismatch", "distributions differ in size");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error("invalid config", "lambda must lie in [0, 1]");
  return Distribution{lambda * retr.probs + (1.0 - lambda) * base.probs};
}

Vector cosine_gradient(const Vector& a, const Vector& b) {
  const double na = a.norm(), nb = b.norm();
  const double c = a.dot(b) / (na * nb);
  return b / (na * nb) - c * a / (na * na);
}

// ---- context projection -------------------------------------------------------

ContextProjection::ContextProjection(nn::ParameterStore& store, int d_model, int positions, Rng& rng)
    : d_model_(d_model), positions_(positions) {
  const int in = 4 * d_model, mid = 2 * d_model;
  w1_ = store.add("proj.w1", gaussian_matrix(mid, in, rng, 1.0 / std::sqrt(in)));
  b1_ = store.add("proj.b1", Matrix::Zero(mid, 1), false);
  w2_ = store.add("proj.w2", gaussian_matrix(d_model, mid, rng, 1.0 / std::sqrt(mid)));
  b2_ = store.add("proj.b2", Matrix::Zero(d_model, 1), false);
  q_ = store.add("proj.q", gaussian_matrix(d_model, positions, rng, 0.1), false);
}

Vector ContextProjection::forward(const nn::ParameterStore& store, const Vector& start, const Vector& goal,
                                  const Vector& task, const Vector& step, int t, Cache* cache) const {
  if (t < 0 || t >= positions_) {
    throw Error("position out of range", "context position " + std::to_string(t) + " beyond q table of " +
                                             std::to_string(positions_));
  }
  const int d = d_model_;
  if (start.size() != d || goal.size() != d || task.size() != d || step.size() != d) {
    throw Error("dimension mismatch", "context inputs must have d_model entries");
  }
  Matrix input(4 * d, 1);
  input << start, goal, task, step + store.value(q_).col(t);
  Matrix pre = nn::affine(input, store.value(w1_), store.value(b1_));
  Matrix hidden = nn::relu(pre);
  Vector out = nn::affine(hidden, store.value(w2_), store.value(b2_)).col(0);
  if (cache) {
    cache->input = std::move(input);
    cache->pre = std::move(pre);
    cache->hidden = std::move(hidden);
  }
  return out;
}

Vector ContextProjection::backward(nn::ParameterStore& store, const Cache& cache, int t, const Vector& d_out,
                                   Matrix* d_input) const {
  Matrix dhidden, dinput;
  nn::affine_backward(cache.hidden, store.value(w2_), Matrix(d_out), store.grad(w2_), store.grad(b2_), &dhidden);
  nn::affine_backward(cache.input, store.value(w1_), nn::relu_backward(cache.pre, dhidden), store.grad(w1_),
                      store.grad(b1_), &dinput);
  const Vector dstep = dinput.col(0).tail(d_model_);
  store.grad(q_).col(t) += dstep;
  if (d_input) *d_input = std::move(dinput);
  return dstep;
}

// ---- retrieval planner --------------------------------------------------------

RetrievalPlanner::RetrievalPlanner(BasePlanner base, const RetrievalConfig& config, std::uint64_t seed)
    : base_(std::move(base)), config_(config) {
  config_.validate();
  Rng rng(derive_seed(seed, 1));
  projection_ = ContextProjection(base_.params(), base_.config().d_model, base_.config().max_decode_length + 1, rng);
  MemoryStore m = build_memory(base_.vocab(), config_, derive_seed(seed, 2));
  keys_ = base_.params().add("memory.keys", std::move(m.keys));
  values_ = std::move(m.values);
}

MemoryStore RetrievalPlanner::memory() const {
  return MemoryStore{keys(), values_, config_.top_k, config_.lambda, config_.temperature};
}

void RetrievalPlanner::set_lambda(double lambda) {
  auto next = config_;
  next.lambda = lambda;
  next.validate();
  config_ = next;
}

void RetrievalPlanner::set_values(std::vector<ActionId> values) {
  if (static_cast<Eigen::Index>(values.size()) != keys().cols()) {
    throw Error("invalid memory", "value count differs from key count");
  }
  MemoryStore probe{Matrix(keys().rows(), 0), values, 1, config_.lambda, config_.temperature};
  probe.keys = keys();
  probe.validate(base_.vocab().size());
  values_ = std::move(values);
}

Vector RetrievalPlanner::context(const Vector& start, const Vector& goal, const Vector& task, const Vector& step,
                                 int t) const {
  return projection_.forward(params(), start, goal, task, step, t);
}

RetrievalPlanner::StepLoss RetrievalPlanner::stage2_loss(const Sample& sample, const Vector& task_embedding,
                                                         bool accumulate, const std::vector<std::vector<int>>* frozen,
                                                         int* correct) {
  const auto& obs = sample.observation;
  const auto& vocab = base_.vocab();
  const auto steps = base_.teacher_inputs(sample.plan);
  const auto fwd = base_.forward(obs.start, obs.goal, task_embedding, steps);
  const Eigen::Index positions = fwd.predicted.cols();
  if (frozen && static_cast<Eigen::Index>(frozen->size()) != positions) {
    throw Error("shape mismatch", "frozen slot sets must cover every position");
  }
  const double lambda = config_.lambda;
  const Matrix& keys_value = params().value(keys_);

  StepLoss out;
  Matrix dpred = Matrix::Zero(fwd.predicted.rows(), positions);
  int hits = 0;
  for (Eigen::Index t = 0; t < positions; ++t) {
    const ActionId y = t < static_cast<Eigen::Index>(steps.size()) ? sample.plan.actions[static_cast<std::size_t>(t)]
                                                                    : ActionVocabulary::kEnd;
    const Vector base_probs = softmax(vocabulary_logits(fwd.predicted.col(t), vocab));
    const Vector prev = t == 0 ? base_.start_embedding() : steps[static_cast<std::size_t>(t - 1)];
    ContextProjection::Cache pc;
    const Vector query = projection_.forward(params(), obs.start, obs.goal, task_embedding, prev, static_cast<int>(t), &pc);
    const Retrieved r = frozen ? retrieve_slots(keys_value, values_, (*frozen)[static_cast<std::size_t>(t)],
                                                config_.temperature, query, vocab.size())
                               : retrieve(keys_value, values_, config_.top_k, config_.temperature, query, vocab.size());
    out.retrieved.push_back(r.indices);

    const Vector all = lambda * r.distribution.probs + (1.0 - lambda) * base_probs;
    const double p = std::max(all(y), 1e-300);
    out.loss -= std::log(p);
    hits += argmax_lowest(all) == y;
    if (!accumulate) continue;

    const double g = -1.0 / p;
    // base branch: d/dlogits of (1 - lambda) P_base[y]
    Vector dlogits = -base_probs * base_probs(y);
    dlogits(y) += base_probs(y);
    dlogits *= (1.0 - lambda) * g;
    dlogits(ActionVocabulary::kStart) = 0.0;
    dpred.col(t) = vocab.embeddings() * dlogits;

    // retrieval branch
    if (lambda == 0.0) continue;
    const auto k = static_cast<Eigen::Index>(r.indices.size());
    Vector dw(k);
    for (Eigen::Index i = 0; i < k; ++i) {
      dw(i) = values_[static_cast<std::size_t>(r.indices[static_cast<std::size_t>(i)])] == y ? lambda * g : 0.0;
    }
    const Vector dsim = r.weights.cwiseProduct(dw.array().matrix() - Vector::Constant(k, r.weights.dot(dw))) /
                        config_.temperature;
    Vector dquery = Vector::Zero(query.size());
    auto& key_grad = params().grad(keys_);
    for (Eigen::Index i = 0; i < k; ++i) {
      if (dsim(i) == 0.0) continue;
      const int slot = r.indices[static_cast<std::size_t>(i)];
      const Vector key = keys_value.col(slot);
      dquery += dsim(i) * cosine_gradient(query, key);
      key_grad.col(slot) += dsim(i) * cosine_gradient(key, query);
    }
    const Vector dprev = projection_.backward(params(), pc, static_cast<int>(t), dquery);
    if (t == 0) params().grad(base_.start_param()).col(0) += dprev;
  }
  if (accumulate) base_.backward(fwd, dpred);
  if (correct) *correct = hits;
  return out;
}

StepTrace RetrievalPlanner::step(const Vector& start, const Vector& goal, const Vector& task,
                                 const std::vector<Vector>& fed) const {
  StepTrace trace = base_.step(start, goal, task, fed);
  const int t = static_cast<int>(fed.size());
  const Vector prev = fed.empty() ? base_.start_embedding() : fed.back();
  const Vector query = context(start, goal, task, prev, t);
  trace.retrieval = retrieve(keys(), values_, config_.top_k, config_.temperature, query, base_.vocab().size()).distribution;
  trace.combined = interpolate(*trace.retrieval, trace.base, config_.lambda);
  return trace;
}

DecodeResult RetrievalPlanner::decode(const Vector& start, const Vector& goal, const TaskClassifier::Prediction& task,
                                      const DecodeOptions& options) const {
  return greedy_decode([&](const std::vector<Vector>& fed) { return step(start, goal, task.embedding, fed); },
                       base_.vocab(), task.task_id, options);
}

DecodeResult decode_plan(const RetrievalPlanner& planner, const TaskClassifier& classifier, const Vector& start,
                         const Vector& goal, const DecodeOptions& options) {
  return planner.decode(start, goal, classifier.classify(start, goal), options);
}

nn::FitResult stage2_train(RetrievalPlanner& planner, const TaskClassifier& classifier, const std::vector<Sample>& train,
                           const std::vector<Sample>& pseudo, const TrainConfig& config) {
  if (train.empty()) throw Error("empty dataset", "stage 2 needs annotated training samples");
  const auto split = carve_validation(train, config.validation_fraction, derive_seed(config.fit.seed, 11));
  std::vector<const Sample*> fit_set;
  for (int i : split.train) fit_set.push_back(&train[static_cast<std::size_t>(i)]);
  for (const auto& s : pseudo) fit_set.push_back(&s);
  std::vector<const Sample*> val_set;
  for (int i : split.validation.empty() ? split.train : split.validation) val_set.push_back(&train[static_cast<std::size_t>(i)]);
  for (const auto* s : fit_set) {
    if (s->plan.horizon() > planner.base().config().max_decode_length) {
      throw Error("invalid sample", "plan exceeds max_decode_length");
    }
    validate_plan(s->plan, planner.base().vocab());
  }

  auto embed = [&](const std::vector<const Sample*>& set) {
    std::vector<Vector> out;
    for (const auto* s : set) out.push_back(classifier.classify(s->observation.start, s->observation.goal).embedding);
    return out;
  };
  const auto fit_tasks = embed(fit_set);
  const auto val_tasks = embed(val_set);

  return nn::fit(
      planner.params(), static_cast<int>(fit_set.size()),
      [&](int i) {
        const auto k = static_cast<std::size_t>(i);
        return planner.stage2_loss(*fit_set[k], fit_tasks[k], true).loss;
      },
      [&] {
        double total = 0.0;
        for (std::size_t i = 0; i < val_set.size(); ++i) total += planner.stage2_loss(*val_set[i], val_tasks[i], false).loss;
        return total / static_cast<double>(val_set.size());
      },
      config.fit);
}

}  // namespace rap
