// Acceptance suite. One PASS/FAIL line per criterion; exit status 1 if any
// criterion fails. argv[1] is a scratch directory for the pipeline runs.

#include "oracles.hpp"

#include "rap/dataio.hpp"
#include "rap/grounding.hpp"
#include "rap/harness.hpp"
#include "rap/metrics.hpp"
#include "rap/nn/gradcheck.hpp"
#include "rap/nn/kernels.hpp"
#include "rap/nn/transformer.hpp"
#include "rap/planner.hpp"
#include "rap/retrieval.hpp"
#include "rap/synthworld.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace rap;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr int kMetricPairs = 1000;
constexpr int kMetricMaxLength = 7;
constexpr int kMetricVocab = 20;
constexpr double kMetricSeconds = 10.0;
constexpr double kMetricMeanTol = 1e-9;

constexpr double kWitnessIou = 100.0;
constexpr double kWitnessEs = 33.33;
constexpr double kWitnessTol = 0.01;

constexpr double kPrimitiveTol = 1e-4;
constexpr double kLossTol = 1e-3;
constexpr double kGradSeconds = 120.0;

constexpr long kMinDecodeSteps = 10000;
constexpr double kSumTol = 1e-9;
constexpr double kBoundSlack = 1e-12;

constexpr int kRetrievalStores = 100;
constexpr int kMaxStoreSize = 2000;
constexpr double kRetrievalTol = 1e-12;

constexpr int kGroundingInstances = 200;
constexpr int kGroundingMaxFrames = 8;
constexpr int kGroundingMaxActions = 3;
constexpr double kGroundingCostTol = 1e-9;

constexpr int kMemorizeSamples = 8;
constexpr int kMemorizeEpochCap = 300;
constexpr double kMemorizeAccuracy = 0.99;
constexpr double kMemorizeSeconds = 300.0;

constexpr double kLengthFactor = 2.0;
constexpr double kEsSlack = 0.5;
constexpr double kPseudoSlack = 1.0;

// Observed once on the default preset, seed 0; reported as drift only.
constexpr double kPinnedBpSr = 69.00;
constexpr double kPinnedRapSr = 69.97;
constexpr double kPinnedBpMes = 89.27;
constexpr double kPinnedRapMes = 89.57;
constexpr double kPinnedPseudoRapSr = 73.04;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

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

std::vector<Sample> samples(const World& w, int n, std::uint64_t seed, double sigma) {
  std::vector<Sample> out;
  for (int i = 0; i < n; ++i) {
    auto s = sample_procedure(w, i % w.num_tasks(), std::nullopt, sigma, derive_seed(seed, static_cast<std::uint64_t>(i))).sample;
    s.source_id = i;
    out.push_back(s);
  }
  return out;
}

// ---- 1 ----

Outcome metric_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  std::vector<Plan> preds, gts;
  double sum_sr = 0, sum_acc = 0, sum_iou = 0, sum_es = 0;
  int mismatches = 0;
  for (int i = 0; i < kMetricPairs; ++i) {
    Plan p{0, {}}, g{0, {}};
    for (Plan* x : {&p, &g}) {
      x->actions.resize(static_cast<std::size_t>(uniform_int(rng, 0, kMetricMaxLength)));
      for (auto& a : x->actions) a = uniform_int(rng, 2, kMetricVocab - 1);
    }
    const auto& a = p.actions;
    const auto& b = g.actions;
    const double longest = static_cast<double>(std::max(a.size(), b.size()));

    const double es = longest == 0 ? 100.0 : 100.0 * (longest - oracle::levenshtein(a, b)) / longest;
    int hits = 0;
    for (std::size_t k = 0; k < a.size() && k < b.size(); ++k) hits += a[k] == b[k];
    const double acc = longest == 0 ? 100.0 : 100.0 * hits / longest;
    std::vector<int> ua(a.begin(), a.end()), ub(b.begin(), b.end()), inter, uni;
    std::sort(ua.begin(), ua.end());
    ua.erase(std::unique(ua.begin(), ua.end()), ua.end());
    std::sort(ub.begin(), ub.end());
    ub.erase(std::unique(ub.begin(), ub.end()), ub.end());
    std::set_intersection(ua.begin(), ua.end(), ub.begin(), ub.end(), std::back_inserter(inter));
    std::set_union(ua.begin(), ua.end(), ub.begin(), ub.end(), std::back_inserter(uni));
    const double iou = uni.empty() ? 100.0 : 100.0 * static_cast<double>(inter.size()) / static_cast<double>(uni.size());
    const int sr = a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin()) ? 1 : 0;

    mismatches += edit_score(a, b) != es;
    mismatches += std::abs(mean_accuracy(a, b) - acc) > kMetricMeanTol;
    mismatches += std::abs(mean_iou(a, b) - iou) > kMetricMeanTol;
    mismatches += success_rate(a, b) != sr;
    sum_sr += sr;
    sum_acc += acc;
    sum_iou += iou;
    sum_es += es;
    preds.push_back(p);
    gts.push_back(g);
  }
  const auto r = aggregate(preds, gts);
  const double n = kMetricPairs;
  const bool means = std::abs(r.sr - 100.0 * sum_sr / n) < kMetricMeanTol && std::abs(r.macc - sum_acc / n) < kMetricMeanTol &&
                     std::abs(r.miou - sum_iou / n) < kMetricMeanTol && std::abs(r.mes - sum_es / n) < kMetricMeanTol;
  const double secs = seconds_since(t0);
  return {mismatches == 0 && means && secs < kMetricSeconds,
          fmt("%d pairs, %d per-pair mismatches, aggregate means %s, %.2fs", kMetricPairs, mismatches,
              means ? "agree" : "DISAGREE", secs)};
}

// ---- 2 ----

Outcome metric_witness() {
  const std::vector<std::string> pred{"pour", "stir", "add water"}, gt{"add water", "stir", "pour"};
  const double iou = mean_iou(pred, gt), es = edit_score(pred, gt);
  return {std::abs(iou - kWitnessIou) < 1e-12 && std::abs(es - kWitnessEs) <= kWitnessTol,
          fmt("reversed 3-step plan: IoU %.2f, ES %.2f", iou, es)};
}

// ---- 3 ----

struct GradLedger {
  bool pass = true;
  double worst_primitive = 0, worst_loss = 0;
  std::string failed;

  void add(const char* name, const nn::GradCheckReport& r, bool full) {
    (full ? worst_loss : worst_primitive) = std::max(full ? worst_loss : worst_primitive, r.max_relative_error);
    if (!r.passed) {
      pass = false;
      failed += std::string(" ") + name;
    }
  }
};

double project(const Matrix& y, const Matrix& r) { return y.cwiseProduct(r).sum(); }

Outcome gradient_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  GradLedger led;
  Rng rng(31);

  {
    const Matrix x = gaussian_matrix(4, 3, rng), w = gaussian_matrix(5, 4, rng), b = gaussian_matrix(5, 1, rng);
    const Matrix r = gaussian_matrix(5, 3, rng);
    Vector packed(x.size() + w.size() + b.size());
    packed << x.reshaped(), w.reshaped(), b.reshaped();
    auto f = [&](const Vector& p, Vector* grad) {
      const Matrix xx = p.head(12).reshaped(4, 3), ww = p.segment(12, 20).reshaped(5, 4), bb = p.tail(5).reshaped(5, 1);
      if (grad) {
        Matrix dw = Matrix::Zero(5, 4), db = Matrix::Zero(5, 1), dx;
        nn::affine_backward(xx, ww, r, dw, db, &dx);
        *grad << dx.reshaped(), dw.reshaped(), db.reshaped();
      }
      return project(nn::affine(xx, ww, bb), r);
    };
    led.add("affine", nn::finite_diff_check(f, packed, 1e-5, kPrimitiveTol), false);
  }
  {
    Matrix x = gaussian_matrix(6, 4, rng);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (std::abs(x.reshaped()(i)) < 1e-2) x.reshaped()(i) = 0.5;
    }
    const Matrix r = gaussian_matrix(6, 4, rng);
    auto f = [&](const Vector& p, Vector* grad) {
      const Matrix xx = p.reshaped(6, 4);
      if (grad) *grad = nn::relu_backward(xx, r).reshaped();
      return project(nn::relu(xx), r);
    };
    led.add("relu", nn::finite_diff_check(f, x.reshaped(), 1e-5, kPrimitiveTol), false);
  }
  {
    const Matrix x = gaussian_matrix(5, 3, rng), g = gaussian_matrix(5, 1, rng), b = gaussian_matrix(5, 1, rng);
    const Matrix r = gaussian_matrix(5, 3, rng);
    Vector packed(25);
    packed << x.reshaped(), g.reshaped(), b.reshaped();
    auto f = [&](const Vector& p, Vector* grad) {
      const Matrix xx = p.head(15).reshaped(5, 3), gg = p.segment(15, 5).reshaped(5, 1), bb = p.tail(5).reshaped(5, 1);
      nn::LayerNormCache<double> cache;
      const Matrix y = nn::layer_norm(xx, gg, bb, cache);
      if (grad) {
        Matrix dg = Matrix::Zero(5, 1), db = Matrix::Zero(5, 1);
        const Matrix dx = nn::layer_norm_backward(cache, gg, r, dg, db);
        *grad << dx.reshaped(), dg.reshaped(), db.reshaped();
      }
      return project(y, r);
    };
    led.add("layer_norm", nn::finite_diff_check(f, packed, 1e-5, kPrimitiveTol), false);
  }
  {
    const Matrix q = gaussian_matrix(3, 4, rng), k = gaussian_matrix(3, 4, rng), v = gaussian_matrix(3, 4, rng);
    const Matrix r = gaussian_matrix(3, 4, rng);
    Vector packed(36);
    packed << q.reshaped(), k.reshaped(), v.reshaped();
    auto f = [&](const Vector& p, Vector* grad) {
      const Matrix qq = p.head(12).reshaped(3, 4), kk = p.segment(12, 12).reshaped(3, 4), vv = p.tail(12).reshaped(3, 4);
      Matrix w;
      const Matrix out = nn::causal_attention(qq, kk, vv, w);
      if (grad) {
        Matrix dq, dk, dv;
        nn::causal_attention_backward(qq, kk, vv, w, r, dq, dk, dv);
        *grad << dq.reshaped(), dk.reshaped(), dv.reshaped();
      }
      return project(out, r);
    };
    led.add("attention", nn::finite_diff_check(f, packed, 1e-5, kPrimitiveTol), false);
  }
  {
    auto f = [&](const Vector& l, Vector* grad) {
      auto ce = nn::softmax_cross_entropy(l, 2);
      if (grad) *grad = ce.grad;
      return ce.loss;
    };
    led.add("cross_entropy", nn::finite_diff_check(f, gaussian_vector(6, rng), 1e-5, kPrimitiveTol), false);
  }
  {
    const Vector pred = gaussian_vector(4, rng);
    const Matrix cand = gaussian_matrix(4, 6, rng);
    Vector packed(28);
    packed << pred, cand.reshaped();
    auto f = [&](const Vector& p, Vector* grad) {
      const Vector pp = p.head(4);
      const Matrix cc = p.tail(24).reshaped(4, 6);
      auto r = nn::infonce(pp, cc, 3, 0, true);
      if (grad) {
        Matrix dc = r.d_embeddings;
        dc.col(0).setZero();
        *grad << r.d_predicted, dc.reshaped();
      }
      return r.loss;
    };
    led.add("infonce", nn::finite_diff_check(f, packed, 1e-5, kPrimitiveTol), false);
  }
  {
    const Vector b = gaussian_vector(5, rng);
    auto f = [&](const Vector& a, Vector* grad) {
      if (grad) *grad = cosine_gradient(a, b);
      return cosine_similarity(a, b);
    };
    led.add("cosine", nn::finite_diff_check(f, gaussian_vector(5, rng), 1e-5, kPrimitiveTol), false);
  }
  {
    nn::ParameterStore store;
    const ContextProjection proj(store, 4, 3, rng);
    const Vector s = gaussian_vector(4, rng), g = gaussian_vector(4, rng), c = gaussian_vector(4, rng);
    const Vector step = gaussian_vector(4, rng), r = gaussian_vector(4, rng);
    auto loss = [&](bool acc) {
      ContextProjection::Cache cache;
      const Vector out = proj.forward(store, s, g, c, step, 2, &cache);
      if (acc) proj.backward(store, cache, 2, r);
      return out.dot(r);
    };
    led.add("projection", nn::finite_diff_check(store, loss, 1e-5, kPrimitiveTol), false);
  }
  {
    nn::ParameterStore store;
    const nn::CausalTransformer tf(store, "tf.", nn::TransformerConfig{2, 2, 8, 16}, rng);
    const Matrix x = gaussian_matrix(8, 5, rng), r = gaussian_matrix(8, 5, rng);
    auto loss = [&](bool acc) {
      nn::CausalTransformer::Cache cache;
      const Matrix y = tf.forward(store, x, &cache);
      if (acc) tf.backward(store, cache, r);
      return project(y, r);
    };
    led.add("transformer", nn::finite_diff_check(store, loss, 1e-5, kLossTol), true);
  }

  const World w = World::generate(small_world(), 4);
  const auto data = samples(w, 4, 6, 0.05);
  {
    BasePlanner bp(small_planner(), w.vocab(), 5);
    for (const auto& s : data) {
      const Vector c = w.task_embeddings().col(s.plan.task_id);
      auto loss = [&](bool acc) { return bp.stage1_loss(s, c, acc); };
      led.add("stage1_loss", nn::finite_diff_check(bp.params(), loss, 1e-5, kLossTol), true);
    }
  }
  {
    TaskClassifier clf(8, w.task_embeddings(), 6, 1);
    auto loss = [&](bool acc) { return clf.loss(data[0].observation, data[0].plan.task_id, acc); };
    led.add("classifier_loss", nn::finite_diff_check(clf.params(), loss, 1e-5, kLossTol), true);
  }
  {
    RetrievalConfig rc;
    rc.memory_size = 40;
    rc.top_k = 5;
    rc.lambda = 0.3;
    RetrievalPlanner rp(BasePlanner(small_planner(), w.vocab(), 9), rc, 10);
    for (const auto& s : data) {
      const Vector c = w.task_embeddings().col(s.plan.task_id);
      const auto frozen = rp.stage2_loss(s, c, false).retrieved;
      auto loss = [&](bool acc) { return rp.stage2_loss(s, c, acc, &frozen).loss; };
      led.add("stage2_loss", nn::finite_diff_check(rp.params(), loss, 1e-5, kLossTol), true);
    }
  }

  const double secs = seconds_since(t0);
  return {led.pass && secs < kGradSeconds,
          fmt("worst rel err: primitives %.2e (< %.0e), full losses %.2e (< %.0e)%s, %.1fs", led.worst_primitive,
              kPrimitiveTol, led.worst_loss, kLossTol, led.failed.empty() ? "" : (", failed:" + led.failed).c_str(),
              secs)};
}

// ---- 4 ----

Outcome probability_laws() {
  const World w = World::generate(small_world(), 13);
  long steps = 0, bad_sum = 0, bad_bound = 0;
  double worst_sum = 0;
  auto check_sum = [&](const Distribution& d) {
    const double e = std::abs(d.probs.sum() - 1.0);
    worst_sum = std::max(worst_sum, e);
    bad_sum += e > kSumTol || (d.probs.array() < 0).any();
  };
  std::uint64_t seed = 0;
  for (double lambda : {0.1, 0.4, 0.8}) {
    RetrievalConfig rc;
    rc.memory_size = 60;
    rc.top_k = 10;
    rc.lambda = lambda;
    const RetrievalPlanner rp(BasePlanner(small_planner(), w.vocab(), 14 + seed), rc, 15 + seed);
    DecodeOptions o = rp.base().decode_options();
    o.keep_trace = true;
    long here = 0;
    while (here < kMinDecodeSteps / 3 + 1) {
      const Sample s = sample_procedure(w, static_cast<int>(seed % 3), std::nullopt, 0.2, seed).sample;
      ++seed;
      const auto r = rp.decode(s.observation.start, s.observation.goal, {s.plan.task_id, w.task_embeddings().col(s.plan.task_id)}, o);
      for (const auto& t : r.trace) {
        ++here;
        if (!t.retrieval || !t.combined) {
          ++bad_sum;
          continue;
        }
        check_sum(t.base);
        check_sum(*t.retrieval);
        check_sum(*t.combined);
        bad_bound += !(t.combined->probs.array() >= (1.0 - lambda) * t.base.probs.array() - kBoundSlack).all();
      }
    }
    steps += here;
  }
  return {steps >= kMinDecodeSteps && bad_sum == 0 && bad_bound == 0,
          fmt("%ld decode steps, worst |sum-1| %.1e, %ld sum violations, %ld mixture-bound violations", steps,
              worst_sum, bad_sum, bad_bound)};
}

// ---- 5 ----

Outcome retrieval_exactness() {
  Rng rng(55);
  double worst = 0;
  int bad = 0, checks = 0;
  for (int store = 0; store < kRetrievalStores; ++store) {
    const int d = uniform_int(rng, 2, 64), n = uniform_int(rng, 10, kMaxStoreSize), vocab = uniform_int(rng, 3, 120);
    const Matrix keys = gaussian_matrix(d, n, rng);
    std::vector<ActionId> values(static_cast<std::size_t>(n));
    for (auto& v : values) v = uniform_int(rng, 1, vocab - 1);
    const Vector q = gaussian_vector(d, rng);
    for (int k : {1, 5, 10}) {
      const double temp = 0.05 + uniform_real(rng);
      const Vector got = retrieve(keys, values, k, temp, q, vocab).distribution.probs;
      const Vector want = oracle::retrieve(keys, values, k, temp, q, vocab);
      const double err = (got - want).cwiseAbs().maxCoeff();
      worst = std::max(worst, err);
      bad += err > kRetrievalTol;
      ++checks;
    }
  }
  return {bad == 0, fmt("%d stores x K in {1,5,10} (%d checks), max |diff| %.1e, %d mismatches", kRetrievalStores,
                        checks, worst, bad)};
}

// ---- 6 ----

Outcome grounding_optimality() {
  Rng rng(66);
  int bad = 0;
  for (int trial = 0; trial < kGroundingInstances; ++trial) {
    const int t = uniform_int(rng, 1, kGroundingMaxFrames), n = uniform_int(rng, 1, kGroundingMaxActions);
    Matrix c(t, n);
    for (Eigen::Index i = 0; i < c.size(); ++i) c.reshaped()(i) = uniform_real(rng);
    const double drop = 0.2 + 0.6 * uniform_real(rng);
    std::vector<int> df, da;
    const auto want = oracle::enumerate_alignment(c, drop, &df);
    // Every action left without a run counts as dropped.
    for (int a = 0; a < n; ++a) {
      if (std::none_of(want.runs.begin(), want.runs.end(), [a](const auto& run) { return run[2] == a; })) da.push_back(a);
    }
    const auto got = align(c, drop);
    bool ok = static_cast<int>(got.segments.size()) == want.count && got.coverage == want.coverage &&
              std::abs(got.total_cost - want.cost) < kGroundingCostTol && got.dropped_frames == df &&
              got.dropped_actions == da;
    for (std::size_t i = 0; ok && i < want.runs.size(); ++i) {
      ok = got.segments[i] == GroundedSegment{want.runs[i][0], want.runs[i][1], want.runs[i][2]};
    }
    bad += !ok;
  }
  const auto fig = align(oracle::figure_cost(), 0.5);
  const bool figure = fig.dropped_frames == std::vector<int>{2, 4} && fig.dropped_actions == std::vector<int>{2} &&
                      fig.segments == std::vector<GroundedSegment>{{0, 1, 0}, {3, 5, 1}} &&
                      fig.segment_frames.size() == 2 && fig.segment_frames[0] == std::vector<int>{0, 1} &&
                      fig.segment_frames[1] == std::vector<int>{3, 5};
  return {bad == 0 && figure, fmt("%d/%d instances match enumeration; figure pattern %s", kGroundingInstances - bad,
                                  kGroundingInstances, figure ? "reproduced" : "NOT reproduced")};
}

// ---- 7 ----

Outcome memorization() {
  const auto t0 = std::chrono::steady_clock::now();
  const World w = World::generate(small_world(), 11);
  const auto train = samples(w, kMemorizeSamples, 12, 0.0);
  PlannerConfig pc = small_planner();
  pc.layers = 2;
  BasePlanner bp(pc, w.vocab(), 13);
  ClassifierConfig cc;
  cc.fit.epochs = 60;
  cc.validation_fraction = 0.0;
  const auto clf = train_task_classifier(train, w.task_embeddings(), cc, 1);
  TrainConfig tc;
  tc.validation_fraction = 0.0;
  tc.fit.epochs = kMemorizeEpochCap;
  tc.fit.batch_size = kMemorizeSamples;
  tc.fit.optimizer.lr = 3e-3;
  tc.fit.optimizer.weight_decay = 0.0;
  stage1_train(bp, clf, train, {}, tc);
  const double acc = teacher_forced_accuracy(bp, clf, train);
  int exact = 0;
  for (const auto& s : train) {
    const auto r = decode_plan(bp, clf, s.observation.start, s.observation.goal, bp.decode_options());
    exact += r.plan.actions == s.plan.actions && !r.truncated;
  }
  const double secs = seconds_since(t0);
  return {acc >= kMemorizeAccuracy && exact == kMemorizeSamples && secs < kMemorizeSeconds,
          fmt("teacher-forced accuracy %.2f%%, %d/%d exact greedy reconstructions (END emitted), cap %d epochs, %.1fs",
              100.0 * acc, exact, kMemorizeSamples, kMemorizeEpochCap, secs)};
}

// ---- 8-11 ----

struct Runs {
  Json base, repeat, pseudo;
  std::string base_bytes, repeat_bytes;
  std::string error;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Runs run_benchmarks(const fs::path& dir) {
  Runs r;
  try {
    fs::remove_all(dir);
    const auto base_cfg = ExperimentConfig::preset_named("crosstask-like");
    auto pseudo_cfg = base_cfg;
    pseudo_cfg.pseudo_fraction = 100.0;

    run_pipeline(base_cfg, dir / "seed0");
    run_pipeline(base_cfg, dir / "seed0_repeat");
    run_pipeline(pseudo_cfg, dir / "seed0_pseudo100");
    r.base_bytes = slurp(dir / "seed0" / "report.json");
    r.repeat_bytes = slurp(dir / "seed0_repeat" / "report.json");
    r.base = read_json(dir / "seed0" / "report.json");
    r.repeat = read_json(dir / "seed0_repeat" / "report.json");
    r.pseudo = read_json(dir / "seed0_pseudo100" / "report.json");
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

double metric(const Json& report, const char* model, const char* key) {
  return report.at("models").at(model).at(key).get<double>();
}

Outcome length_competence(const Runs& r) {
  if (!r.error.empty()) return {false, "pipeline failed: " + r.error};
  const double random = r.base.at("random_length_baseline").get<double>();
  const double bp = metric(r.base, "BP", "length_accuracy"), rap = metric(r.base, "RAP", "length_accuracy");
  return {bp >= kLengthFactor * random && rap >= kLengthFactor * random,
          fmt("length accuracy Random %.2f < BP %.2f %s RAP %.2f (need >= %.2f)", random, bp, bp <= rap ? "<=" : ">", rap,
              kLengthFactor * random)};
}

Outcome retrieval_benefit(const Runs& r) {
  if (!r.error.empty()) return {false, "pipeline failed: " + r.error};
  const double bp_sr = metric(r.base, "BP", "sr"), rap_sr = metric(r.base, "RAP", "sr");
  const double bp_es = metric(r.base, "BP", "mes"), rap_es = metric(r.base, "RAP", "mes");
  return {rap_sr >= bp_sr && rap_es >= bp_es - kEsSlack,
          fmt("SR BP %.2f RAP %.2f, mES BP %.2f RAP %.2f (pinned SR %.2f/%.2f, mES %.2f/%.2f)", bp_sr, rap_sr, bp_es,
              rap_es, kPinnedBpSr, kPinnedRapSr, kPinnedBpMes, kPinnedRapMes)};
}

Outcome weak_supervision(const Runs& r) {
  if (!r.error.empty()) return {false, "pipeline failed: " + r.error};
  const double zero = metric(r.base, "RAP", "sr"), full = metric(r.pseudo, "RAP", "sr");
  const double zero_bp = metric(r.base, "BP", "sr"), full_bp = metric(r.pseudo, "BP", "sr");
  return {full >= zero - kPseudoSlack,
          fmt("RAP SR 0%% pseudo %.2f, 100%% pseudo %.2f (pinned %.2f); BP %.2f -> %.2f; %d pseudo samples", zero, full,
              kPinnedPseudoRapSr, zero_bp, full_bp, r.pseudo.at("dataset").at("pseudo").get<int>())};
}

Outcome determinism(const Runs& r) {
  if (!r.error.empty()) return {false, "pipeline failed: " + r.error};
  const bool same = !r.base_bytes.empty() && r.base_bytes == r.repeat_bytes;
  return {same, fmt("report.json %zu vs %zu bytes, %s", r.base_bytes.size(), r.repeat_bytes.size(),
                    same ? "identical" : "DIFFERENT")};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path runs = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "rap_acceptance";
  int failed = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  %2d %-22s %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "metric-oracle", metric_oracle);
  report(2, "metric-witness", metric_witness);
  report(3, "gradient-fidelity", gradient_fidelity);
  report(4, "probability-laws", probability_laws);
  report(5, "retrieval-exactness", retrieval_exactness);
  report(6, "grounding-optimality", grounding_optimality);
  report(7, "memorization", memorization);

  const Runs r = run_benchmarks(runs);
  report(8, "length-competence", [&] { return length_competence(r); });
  report(9, "retrieval-benefit", [&] { return retrieval_benefit(r); });
  report(10, "weak-supervision", [&] { return weak_supervision(r); });
  report(11, "determinism", [&] { return determinism(r); });

  std::printf("%d/11 criteria passed\n", 11 - failed);
  return failed == 0 ? 0 : 1;
}
