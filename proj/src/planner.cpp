#include "rap/planner.hpp"

#include "rap/nn/kernels.hpp"
#include "rap/random.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace rap {

void PlannerConfig::validate() const {
  nn::TransformerConfig{layers, heads, d_model, mlp_ratio * d_model}.validate();
  if (max_decode_length < 1) throw Error("invalid config", "max_decode_length must be >= 1");
  if (mode == DecodeMode::fixed && (fixed_horizon < 1 || fixed_horizon > max_decode_length)) {
    throw Error("invalid config", "fixed horizon must lie in [1, max_decode_length]");
  }
}

// ---- task classifier ----------------------------------------------------------

TaskClassifier::TaskClassifier(int d_model, Matrix task_embeddings, int hidden, std::uint64_t seed)
    : task_embeddings_(std::move(task_embeddings)), hidden_(hidden) {
  if (task_embeddings_.rows() != d_model) throw Error("shape mismatch", "task embeddings must have d_model rows");
  if (hidden < 1) throw Error("invalid config", "classifier hidden width must be positive");
  Rng rng(seed);
  const int in = 2 * d_model;
  w1_ = params_.add("classifier.w1", gaussian_matrix(hidden, in, rng, 1.0 / std::sqrt(in)));
  b1_ = params_.add("classifier.b1", Matrix::Zero(hidden, 1), false);
  w2_ = params_.add("classifier.w2", gaussian_matrix(num_tasks(), hidden, rng, 1.0 / std::sqrt(hidden)));
  b2_ = params_.add("classifier.b2", Matrix::Zero(num_tasks(), 1), false);
}

Vector TaskClassifier::logits(const Vector& start, const Vector& goal) const {
  Matrix x(2 * d_model(), 1);
  x << start, goal;
  const Matrix hidden = nn::relu(nn::affine(x, params_.value(w1_), params_.value(b1_)));
  return nn::affine(hidden, params_.value(w2_), params_.value(b2_)).col(0);
}

TaskClassifier::Prediction TaskClassifier::classify(const Vector& start, const Vector& goal) const {
  const auto k = static_cast<int>(argmax_lowest(logits(start, goal)));
  return {k, task_embeddings_.col(k)};
}

double TaskClassifier::loss(const Observation& obs, int task_id, bool accumulate) {
  Matrix x(2 * d_model(), 1);
  x << obs.start, obs.goal;
  const Matrix pre = nn::affine(x, params_.value(w1_), params_.value(b1_));
  const Matrix hidden = nn::relu(pre);
  const Matrix out = nn::affine(hidden, params_.value(w2_), params_.value(b2_));
  auto ce = nn::softmax_cross_entropy(out.col(0), task_id);
  if (accumulate) {
    Matrix dhidden;
    nn::affine_backward(hidden, params_.value(w2_), Matrix(ce.grad), params_.grad(w2_), params_.grad(b2_), &dhidden);
    nn::affine_backward(x, params_.value(w1_), nn::relu_backward(pre, dhidden), params_.grad(w1_), params_.grad(b1_),
                        static_cast<Matrix*>(nullptr));
  }
  return ce.loss;
}

TaskClassifier train_task_classifier(const std::vector<Sample>& train, const Matrix& task_embeddings,
                                     const ClassifierConfig& config, std::uint64_t seed) {
  std::set<int> classes;
  for (const auto& s : train) {
    if (s.observation.task_id < 0 || s.observation.task_id >= task_embeddings.cols()) {
      throw Error("invalid sample", "task id " + std::to_string(s.observation.task_id) + " has no embedding");
    }
    classes.insert(s.observation.task_id);
  }
  if (classes.size() < 2) throw Error("single-class data", "task classifier needs at least two task classes");

  TaskClassifier classifier(static_cast<int>(task_embeddings.rows()), task_embeddings, config.hidden, seed);
  const auto split = carve_validation(train, config.validation_fraction, derive_seed(seed, 1));
  const auto& val_idx = split.validation.empty() ? split.train : split.validation;

  auto fit_config = config.fit;
  fit_config.seed = derive_seed(seed, 2);
  nn::fit(
      classifier.params(), static_cast<int>(split.train.size()),
      [&](int i) {
        const auto& s = train[static_cast<std::size_t>(split.train[static_cast<std::size_t>(i)])];
        return classifier.loss(s.observation, s.observation.task_id, true);
      },
      [&] {
        double total = 0;
        for (int i : val_idx) {
          const auto& s = train[static_cast<std::size_t>(i)];
          total += classifier.loss(s.observation, s.observation.task_id, false);
        }
        return total / static_cast<double>(val_idx.size());
      },
      fit_config);
  return classifier;
}

double classifier_accuracy(const TaskClassifier& classifier, const std::vector<Sample>& samples) {
  if (samples.empty()) return 0.0;
  int hits = 0;
  for (const auto& s : samples) {
    hits += classifier.classify(s.observation.start, s.observation.goal).task_id == s.observation.task_id;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

// ---- decoding -----------------------------------------------------------------

DecodeResult greedy_decode(const StepFunction& step, const ActionVocabulary& vocab, int task_id,
                           const DecodeOptions& options) {
  if (options.mode == DecodeMode::fixed && (options.fixed_horizon < 1 || options.fixed_horizon > options.max_length)) {
    throw Error("invalid config", "fixed horizon must lie in [1, max_length]");
  }
  DecodeResult out;
  out.plan.task_id = task_id;
  std::vector<Vector> fed;
  while (true) {
    if (options.mode == DecodeMode::fixed && out.plan.horizon() == options.fixed_horizon) break;
    StepTrace trace = step(fed);
    Vector scores = trace.final_distribution().probs;
    if (options.mode == DecodeMode::fixed) scores(ActionVocabulary::kEnd) = -1.0;
    trace.chosen = static_cast<ActionId>(argmax_lowest(scores));
    const ActionId chosen = trace.chosen;
    Vector feedback = options.raw_feedback ? trace.predicted : Vector(vocab.embedding(chosen));
    if (options.keep_trace) out.trace.push_back(std::move(trace));

    if (chosen == ActionVocabulary::kEnd) {
      out.degenerate = out.plan.actions.empty();
      break;
    }
    out.plan.actions.push_back(chosen);
    if (options.mode == DecodeMode::adaptive && out.plan.horizon() >= options.max_length) {
      out.truncated = true;
      break;
    }
    fed.push_back(std::move(feedback));
  }
  return out;
}

// ---- base planner -------------------------------------------------------------

BasePlanner::BasePlanner(const PlannerConfig& config, ActionVocabulary vocab, std::uint64_t seed)
    : config_(config), vocab_(std::move(vocab)) {
  config_.validate();
  if (vocab_.dim() != config_.d_model) throw Error("shape mismatch", "vocabulary dimension differs from d_model");
  Rng rng(seed);
  const int d = config_.d_model;
  transformer_ = nn::CausalTransformer(params_, "base.", {config_.layers, config_.heads, d, config_.mlp_ratio * d}, rng);
  start_ = params_.add("base.start", Matrix(vocab_.embedding(ActionVocabulary::kStart)), false);
  positions_ = params_.add("base.positions", gaussian_matrix(d, config_.max_decode_length, rng, 0.1), false);
  head_w_ = params_.add("base.head.w", gaussian_matrix(d, d, rng, config_.head_init));
  head_b_ = params_.add("base.head.b", Matrix::Zero(d, 1), false);
}

Matrix BasePlanner::tokens(const Vector& start, const Vector& goal, const Vector& task,
                           const std::vector<Vector>& steps) const {
  const int d = config_.d_model;
  if (static_cast<int>(steps.size()) > config_.max_decode_length) {
    throw Error("sequence too long", std::to_string(steps.size()) + " steps exceed max_decode_length " +
                                         std::to_string(config_.max_decode_length));
  }
  if (start.size() != d || goal.size() != d || task.size() != d) {
    throw Error("dimension mismatch", "planner inputs must have d_model entries");
  }
  Matrix x(d, 4 + static_cast<Eigen::Index>(steps.size()));
  x.col(0) = start;
  x.col(1) = goal;
  x.col(2) = task;
  x.col(3) = params_.value(start_).col(0);
  const Matrix& pos = params_.value(positions_);
  for (std::size_t k = 0; k < steps.size(); ++k) {
    if (steps[k].size() != d) throw Error("dimension mismatch", "step embedding has wrong width");
    x.col(4 + static_cast<Eigen::Index>(k)) = steps[k] + pos.col(static_cast<Eigen::Index>(k));
  }
  return x;
}

BasePlanner::Forward BasePlanner::forward(const Vector& start, const Vector& goal, const Vector& task,
                                          const std::vector<Vector>& steps) const {
  Forward f;
  f.tokens = tokens(start, goal, task, steps);
  const Matrix out = transformer_.forward(params_, f.tokens, &f.cache);
  f.features = out.rightCols(static_cast<Eigen::Index>(steps.size()) + 1);
  f.predicted = nn::affine(f.features, params_.value(head_w_), params_.value(head_b_));
  return f;
}

void BasePlanner::backward(const Forward& fwd, const Matrix& d_predicted) {
  Matrix dfeatures;
  nn::affine_backward(fwd.features, params_.value(head_w_), d_predicted, params_.grad(head_w_), params_.grad(head_b_),
                      &dfeatures);
  Matrix dout = Matrix::Zero(fwd.tokens.rows(), fwd.tokens.cols());
  dout.rightCols(dfeatures.cols()) = dfeatures;
  const Matrix dx = transformer_.backward(params_, fwd.cache, dout);
  params_.grad(start_).col(0) += dx.col(3);
  const Eigen::Index steps = dx.cols() - 4;
  if (steps > 0) params_.grad(positions_).leftCols(steps) += dx.rightCols(steps);
}

Distribution BasePlanner::distribution(const Vector& predicted) const {
  return nearest_action(predicted, vocab_).distribution;
}

std::vector<Vector> BasePlanner::teacher_inputs(const Plan& plan) const {
  std::vector<Vector> steps;
  steps.reserve(plan.actions.size());
  for (auto a : plan.actions) steps.emplace_back(vocab_.embedding(a));
  return steps;
}

double BasePlanner::stage1_loss(const Sample& sample, const Vector& task_embedding, bool accumulate, int* correct) {
  const auto& obs = sample.observation;
  const auto steps = teacher_inputs(sample.plan);
  const Forward fwd = forward(obs.start, obs.goal, task_embedding, steps);
  Matrix dpred(fwd.predicted.rows(), fwd.predicted.cols());
  double loss = 0.0;
  int hits = 0;
  for (Eigen::Index t = 0; t < fwd.predicted.cols(); ++t) {
    const ActionId target = t < static_cast<Eigen::Index>(steps.size())
                                ? sample.plan.actions[static_cast<std::size_t>(t)]
                                : ActionVocabulary::kEnd;
    auto nce = nn::infonce<double>(fwd.predicted.col(t), vocab_.embeddings(), target, ActionVocabulary::kStart);
    loss += nce.loss;
    dpred.col(t) = nce.d_predicted;
    hits += argmax_lowest(nce.probs) == target;
  }
  if (correct) *correct = hits;
  if (accumulate) backward(fwd, dpred);
  return loss;
}

DecodeOptions BasePlanner::decode_options() const {
  return DecodeOptions{config_.mode, config_.fixed_horizon, config_.max_decode_length, config_.raw_feedback, false};
}

StepTrace BasePlanner::step(const Vector& start, const Vector& goal, const Vector& task,
                            const std::vector<Vector>& fed) const {
  const Forward f = forward(start, goal, task, fed);
  StepTrace trace;
  trace.predicted = f.predicted.rightCols(1);
  trace.base = distribution(trace.predicted);
  return trace;
}

DecodeResult BasePlanner::decode(const Vector& start, const Vector& goal, const TaskClassifier::Prediction& task,
                                 const DecodeOptions& options) const {
  return greedy_decode([&](const std::vector<Vector>& fed) { return step(start, goal, task.embedding, fed); }, vocab_,
                       task.task_id, options);
}

DecodeResult decode_plan(const BasePlanner& planner, const TaskClassifier& classifier, const Vector& start,
                         const Vector& goal, const DecodeOptions& options) {
  return planner.decode(start, goal, classifier.classify(start, goal), options);
}

// ---- stage-1 training ----------------------------------------------------------

ValidationSplit carve_validation(const std::vector<Sample>& samples, double fraction, std::uint64_t seed) {
  std::vector<int> sources;
  for (const auto& s : samples) sources.push_back(s.source_id);
  std::sort(sources.begin(), sources.end());
  sources.erase(std::unique(sources.begin(), sources.end()), sources.end());

  ValidationSplit split;
  auto n_val = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(sources.size())));
  if (fraction > 0.0 && sources.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, sources.size() - 1);
  else n_val = 0;

  Rng rng(seed);
  std::shuffle(sources.begin(), sources.end(), rng);
  const std::set<int> held(sources.begin(), sources.begin() + static_cast<std::ptrdiff_t>(n_val));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (held.contains(samples[i].source_id) ? split.validation : split.train).push_back(static_cast<int>(i));
  }
  return split;
}

std::vector<Vector> predicted_task_embeddings(const TaskClassifier& classifier, const std::vector<Sample>& samples) {
  std::vector<Vector> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(classifier.classify(s.observation.start, s.observation.goal).embedding);
  return out;
}

namespace {

void check_trainable(const std::vector<Sample>& samples, const PlannerConfig& config, const ActionVocabulary& vocab) {
  for (const auto& s : samples) {
    if (s.plan.actions.empty()) throw Error("invalid sample", "empty plan in training data");
    if (s.plan.horizon() > config.max_decode_length) {
      throw Error("invalid sample", "plan of length " + std::to_string(s.plan.horizon()) +
                                        " exceeds max_decode_length " + std::to_string(config.max_decode_length));
    }
    validate_plan(s.plan, vocab);
  }
}

}  // namespace

nn::FitResult stage1_train(BasePlanner& planner, const TaskClassifier& classifier, const std::vector<Sample>& train,
                           const std::vector<Sample>& pseudo, const TrainConfig& config) {
  if (train.empty()) throw Error("empty dataset", "stage 1 needs annotated training samples");
  check_trainable(train, planner.config(), planner.vocab());
  check_trainable(pseudo, planner.config(), planner.vocab());

  const auto split = carve_validation(train, config.validation_fraction, derive_seed(config.fit.seed, 11));
  std::vector<const Sample*> fit_set;
  for (int i : split.train) fit_set.push_back(&train[static_cast<std::size_t>(i)]);
  for (const auto& s : pseudo) fit_set.push_back(&s);
  std::vector<const Sample*> val_set;
  for (int i : split.validation.empty() ? split.train : split.validation) val_set.push_back(&train[static_cast<std::size_t>(i)]);

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
        return planner.stage1_loss(*fit_set[static_cast<std::size_t>(i)], fit_tasks[static_cast<std::size_t>(i)], true);
      },
      [&] {
        double total = 0.0;
        for (std::size_t i = 0; i < val_set.size(); ++i) total += planner.stage1_loss(*val_set[i], val_tasks[i], false);
        return total / static_cast<double>(val_set.size());
      },
      config.fit);
}

double teacher_forced_accuracy(BasePlanner& planner, const TaskClassifier& classifier,
                               const std::vector<Sample>& samples) {
  int hits = 0, total = 0;
  for (const auto& s : samples) {
    int correct = 0;
    const auto task = classifier.classify(s.observation.start, s.observation.goal);
    planner.stage1_loss(s, task.embedding, false, &correct);
    hits += correct;
    total += s.plan.horizon() + 1;
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / total;
}

}  // namespace rap
