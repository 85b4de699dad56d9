#include "oracles.hpp"

#include "rap/nn/gradcheck.hpp"
#include "rap/retrieval.hpp"
#include "rap/synthworld.hpp"

#include <gtest/gtest.h>

using namespace rap;

namespace {

WorldConfig small_world() {
  WorldConfig c;
  c.num_tasks = 3;
  c.actions_per_task = 5;
  c.d_model = 8;
  c.shared_attributes = 2;
  c.horizon_min = 2;
  c.horizon_max = 4;
  return c;
}

PlannerConfig small_planner() {
  PlannerConfig p;
  p.layers = 1;
  p.heads = 2;
  p.d_model = 8;
  p.max_decode_length = 6;
  return p;
}

RetrievalConfig small_memory(double lambda = 0.3) {
  RetrievalConfig r;
  r.memory_size = 40;
  r.top_k = 5;
  r.lambda = lambda;
  return r;
}

Sample sample(const World& w, std::uint64_t seed) {
  return sample_procedure(w, static_cast<int>(seed % 3), std::nullopt, 0.05, seed).sample;
}

}  // namespace

TEST(Memory, BalancedValuesAndUnitKeys) {
  const World w = World::generate(small_world(), 1);
  RetrievalConfig cfg;
  cfg.memory_size = 100;
  const auto m = build_memory(w.vocab(), cfg, 3);
  ASSERT_EQ(m.size(), 100);
  EXPECT_NO_THROW(m.validate(w.vocab().size()));
  const auto counts = value_counts(m, w.vocab().size());
  EXPECT_EQ(counts[ActionVocabulary::kStart], 0);
  const auto [lo, hi] = std::minmax_element(counts.begin() + 1, counts.end());
  EXPECT_LE(*hi - *lo, 1);
  EXPECT_GE(*lo, 1);
  for (int n = 0; n < m.size(); ++n) EXPECT_NEAR(m.keys.col(n).norm(), 1.0, 1e-12);

  cfg.memory_size = 10;
  cfg.top_k = 5;
  try {
    build_memory(w.vocab(), cfg, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "memory smaller than vocabulary");
  }
}

TEST(Memory, ConfigValidation) {
  RetrievalConfig r;
  r.top_k = 0;
  EXPECT_THROW(r.validate(), Error);
  r = {};
  r.lambda = 1.5;
  EXPECT_THROW(r.validate(), Error);
  r = {};
  r.temperature = 0.0;
  EXPECT_THROW(r.validate(), Error);
}

TEST(Retrieve, MatchesExhaustiveOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const int d = uniform_int(rng, 2, 12), n = uniform_int(rng, 10, 300), vocab = uniform_int(rng, 3, 25);
    const Matrix keys = gaussian_matrix(d, n, rng);
    std::vector<ActionId> values(static_cast<std::size_t>(n));
    for (auto& v : values) v = uniform_int(rng, 1, vocab - 1);
    const Vector q = gaussian_vector(d, rng);
    for (int k : {1, 5, 10}) {
      const double temp = 0.5 + uniform_real(rng);
      const auto r = retrieve(keys, values, k, temp, q, vocab);
      const Vector expect = oracle::retrieve(keys, values, k, temp, q, vocab);
      ASSERT_LT((r.distribution.probs - expect).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_TRUE(r.distribution.is_normalized());
      ASSERT_EQ(static_cast<int>(r.indices.size()), k);
      for (int i = 1; i < k; ++i) EXPECT_GE(r.similarities(i - 1), r.similarities(i));
    }
  }
}

TEST(Retrieve, TiesResolveToLowestSlot) {
  Matrix keys(2, 4);
  keys << 1, 0, 1, 1, 0, 1, 0, 0;
  const std::vector<ActionId> values{2, 3, 4, 5};
  const auto r = retrieve(keys, values, 2, 1.0, Vector::Unit(2, 0), 6);
  EXPECT_EQ(r.indices, (std::vector<int>{0, 2}));
}

TEST(Retrieve, DegenerateInputsThrow) {
  const Matrix keys = Matrix::Identity(3, 3);
  const std::vector<ActionId> values{1, 2, 2};
  EXPECT_THROW(retrieve(keys, values, 2, 1.0, Vector::Zero(3), 4), Error);
  Matrix zero_key = keys;
  zero_key.col(1).setZero();
  EXPECT_THROW(retrieve(zero_key, values, 2, 1.0, Vector::Ones(3), 4), Error);
  EXPECT_THROW(retrieve(keys, values, 4, 1.0, Vector::Ones(3), 4), Error);
  EXPECT_THROW(retrieve(keys, values, 1, 1.0, Vector::Ones(2), 4), Error);
}

TEST(Interpolate, WorkedExample) {
  Distribution retr{Vector(2)}, base{Vector(2)};
  retr.probs << 1.0, 0.0;
  base.probs << 0.5, 0.5;
  const auto all = interpolate(retr, base, 0.1);
  EXPECT_NEAR(all[0], 0.55, 1e-15);
  EXPECT_NEAR(all[1], 0.45, 1e-15);
  EXPECT_THROW(interpolate(retr, Distribution{Vector::Ones(3) / 3}, 0.1), Error);
}

TEST(Cosine, GradientMatchesFiniteDifference) {
  Rng rng(6);
  const Vector b = gaussian_vector(5, rng);
  auto f = [&](const Vector& a, Vector* grad) {
    if (grad) *grad = cosine_gradient(a, b);
    return oracle::cosine(a, b);
  };
  const auto rep = nn::finite_diff_check(f, gaussian_vector(5, rng));
  EXPECT_TRUE(rep.passed) << rep.max_relative_error;
}

TEST(Projection, GradientMatchesFiniteDifference) {
  nn::ParameterStore store;
  Rng rng(7);
  const ContextProjection proj(store, 4, 3, rng);
  const Vector s = gaussian_vector(4, rng), g = gaussian_vector(4, rng), c = gaussian_vector(4, rng);
  const Vector step = gaussian_vector(4, rng), r = gaussian_vector(4, rng);
  auto loss = [&](bool acc) {
    ContextProjection::Cache cache;
    const Vector out = proj.forward(store, s, g, c, step, 2, &cache);
    if (acc) proj.backward(store, cache, 2, r);
    return out.dot(r);
  };
  const auto rep = nn::finite_diff_check(store, loss, 1e-5, 1e-4);
  EXPECT_TRUE(rep.passed) << rep.worst_coordinate << " " << rep.max_relative_error;

  auto f = [&](const Vector& x, Vector* grad) {
    ContextProjection::Cache cache;
    const Vector out = proj.forward(store, s, g, c, x, 1, &cache);
    if (grad) *grad = proj.backward(store, cache, 1, r);
    return out.dot(r);
  };
  EXPECT_TRUE(nn::finite_diff_check(f, step).passed);
  EXPECT_THROW(proj.forward(store, s, g, c, step, 3), Error);
}

TEST(Stage2, LossGradientWithFrozenTopK) {
  const World w = World::generate(small_world(), 8);
  RetrievalPlanner rp(BasePlanner(small_planner(), w.vocab(), 9), small_memory(), 10);
  const Sample s = sample(w, 11);
  const Vector c = w.task_embeddings().col(s.plan.task_id);
  const auto frozen = rp.stage2_loss(s, c, false).retrieved;
  auto loss = [&](bool acc) { return rp.stage2_loss(s, c, acc, &frozen).loss; };
  const auto rep = nn::finite_diff_check(rp.params(), loss, 1e-5, 1e-3);
  EXPECT_TRUE(rep.passed) << rep.worst_coordinate << " " << rep.max_relative_error;
}

TEST(Stage2, ZeroLambdaLeavesKeysUntouched) {
  const World w = World::generate(small_world(), 8);
  RetrievalPlanner rp(BasePlanner(small_planner(), w.vocab(), 9), small_memory(0.0), 10);
  const Sample s = sample(w, 12);
  rp.params().zero_grad();
  const double l = rp.stage2_loss(s, w.task_embeddings().col(s.plan.task_id), true).loss;
  EXPECT_EQ(rp.params()[rp.keys_param()].grad.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(rp.params()[rp.params().id("proj.w1")].grad.cwiseAbs().maxCoeff(), 0.0);

  // With lambda = 0 the joint loss is the base cross-entropy.
  const auto steps = rp.base().teacher_inputs(s.plan);
  const auto fwd = rp.base().forward(s.observation.start, s.observation.goal, w.task_embeddings().col(s.plan.task_id), steps);
  double ce = 0;
  for (Eigen::Index t = 0; t < fwd.predicted.cols(); ++t) {
    const ActionId y = t < static_cast<Eigen::Index>(steps.size()) ? s.plan.actions[static_cast<std::size_t>(t)] : ActionVocabulary::kEnd;
    ce -= std::log(rp.base().distribution(fwd.predicted.col(t))[y]);
  }
  EXPECT_NEAR(l, ce, 1e-10);
}

TEST(Stage2, StepDistributionsObeyMixtureBound) {
  const World w = World::generate(small_world(), 13);
  RetrievalPlanner rp(BasePlanner(small_planner(), w.vocab(), 14), small_memory(0.4), 15);
  DecodeOptions o = rp.base().decode_options();
  o.keep_trace = true;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const Sample s = sample(w, i);
    const auto r = rp.decode(s.observation.start, s.observation.goal, {s.plan.task_id, w.task_embeddings().col(s.plan.task_id)}, o);
    for (const auto& t : r.trace) {
      ASSERT_TRUE(t.retrieval && t.combined);
      EXPECT_TRUE(t.base.is_normalized());
      EXPECT_TRUE(t.retrieval->is_normalized());
      EXPECT_TRUE(t.combined->is_normalized());
      EXPECT_TRUE((t.combined->probs.array() >= 0.6 * t.base.probs.array() - 1e-15).all());
      EXPECT_EQ((*t.combined)[ActionVocabulary::kStart], 0.0);
    }
  }
}

TEST(Stage2, SetValuesAndLambdaAreValidated) {
  const World w = World::generate(small_world(), 8);
  RetrievalPlanner rp(BasePlanner(small_planner(), w.vocab(), 9), small_memory(), 10);
  auto v = rp.values();
  v[0] = ActionVocabulary::kStart;
  EXPECT_THROW(rp.set_values(v), Error);
  v.pop_back();
  EXPECT_THROW(rp.set_values(v), Error);
  EXPECT_THROW(rp.set_lambda(-0.1), Error);
  rp.set_lambda(0.7);
  EXPECT_DOUBLE_EQ(rp.memory().lambda, 0.7);
}

TEST(Stage2, TrainingLowersLoss) {
  const World w = World::generate(small_world(), 16);
  std::vector<Sample> train;
  for (std::uint64_t i = 0; i < 24; ++i) {
    train.push_back(sample(w, 100 + i));
    train.back().source_id = static_cast<int>(i);
  }
  RetrievalPlanner rp(BasePlanner(small_planner(), w.vocab(), 17), small_memory(), 18);
  const TaskClassifier clf(8, w.task_embeddings(), 4, 1);
  TrainConfig tc;
  tc.validation_fraction = 0.0;
  tc.fit.epochs = 15;
  tc.fit.batch_size = 8;
  const auto r = stage2_train(rp, clf, train, {}, tc);
  EXPECT_LT(r.best_validation_loss, r.history.front().validation_loss);
}
