#include "rap/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace rap {

VideoConfig default_unannotated_video() {
  VideoConfig v;
  v.distractor_rate = 0.15;
  v.min_steps = 3;
  v.max_steps = 6;
  return v;
}

// ---- config -------------------------------------------------------------------

namespace {

void check_video(const VideoConfig& v, const std::string& what) {
  auto fail = [&](const std::string& msg) { throw Error("invalid config", what + ": " + msg); };
  if (!(v.sigma >= 0.0)) fail("sigma must be >= 0");
  if (v.min_frames_per_step < 1 || v.max_frames_per_step < v.min_frames_per_step) fail("bad frames-per-step range");
  if (v.min_lead_in < 0 || v.max_lead_in < v.min_lead_in) fail("bad lead-in range");
  if (!(v.distractor_rate >= 0.0 && v.distractor_rate <= 1.0)) fail("distractor_rate must lie in [0, 1]");
  if (v.min_steps < 0 || v.max_steps < 0 || (v.max_steps > 0 && v.max_steps < v.min_steps)) fail("bad step range");
}

}  // namespace

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error("invalid config", msg); };
  world.validate();
  if (planner.d_model != world.d_model) fail("planner d_model must equal world d_model");
  planner.validate();
  retrieval.validate();
  grounding.validate();
  check_video(annotated, "annotated");
  check_video(unannotated, "unannotated");
  if (sources_per_task < 2) fail("sources_per_task must be >= 2");
  if (horizons.empty()) fail("horizons must be nonempty");
  for (int h : horizons) {
    if (h < 1 || h > world.horizon_max) fail("horizon " + std::to_string(h) + " outside [1, world.horizon_max]");
    if (h > planner.max_decode_length) fail("horizon exceeds max_decode_length");
  }
  if (std::set<int>(horizons.begin(), horizons.end()).size() != horizons.size()) fail("duplicate horizons");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) fail("split_ratio must lie in (0, 1)");
  if (unannotated_per_task < 0) fail("unannotated_per_task must be >= 0");
  if (!(discrepancy_probability >= 0.0 && discrepancy_probability <= 1.0)) fail("discrepancy_probability in [0, 1]");
  static const std::set<double> fractions{0.0, 25.0, 50.0, 75.0, 100.0};
  if (!fractions.contains(pseudo_fraction)) fail("pseudo_fraction must be one of 0, 25, 50, 75, 100");
  if (unannotated.max_steps > planner.max_decode_length) fail("unannotated walks exceed max_decode_length");
  if (classifier.hidden < 1 || classifier.fit.epochs < 0 || classifier.fit.batch_size < 1) fail("bad classifier config");
  if (!(optimizer.lr > 0.0) || optimizer.weight_decay < 0.0) fail("bad optimizer config");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
    fail("betas must lie in [0, 1)");
  }
  if (!(scheduler.factor > 0.0 && scheduler.factor <= 1.0) || scheduler.patience < 0) fail("bad scheduler config");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (stage1_epochs < 0 || stage2_epochs < 0 || !(epoch_scale > 0.0)) fail("bad epoch settings");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) fail("validation_fraction must lie in [0, 1)");
  if (!(stage2_lr > 0.0)) fail("stage2_lr must be positive");
}

int ExperimentConfig::scaled_stage1_epochs() const {
  return static_cast<int>(std::lround(stage1_epochs * epoch_scale));
}
int ExperimentConfig::scaled_stage2_epochs() const {
  return static_cast<int>(std::lround(stage2_epochs * epoch_scale));
}

ExperimentConfig ExperimentConfig::preset_named(const std::string& name) {
  ExperimentConfig c;
  c.preset = name;
  if (name == "crosstask-like") return c;
  if (name == "coin-like") {
    c.world.num_tasks = 24;
    c.world.actions_per_task = 5;
    c.world.horizon_min = 3;
    c.world.horizon_max = 5;
    c.horizons = {2, 3, 4};
    c.sources_per_task = 30;
    c.unannotated.min_steps = 2;
    c.unannotated.max_steps = 4;
    c.planner.max_decode_length = 10;
    c.retrieval.memory_size = 150;
    return c;
  }
  throw Error("unknown preset", "'" + name + "' (expected crosstask-like or coin-like)");
}

namespace {

Json video_json(const VideoConfig& v) {
  return {{"sigma", v.sigma},
          {"min_frames_per_step", v.min_frames_per_step},
          {"max_frames_per_step", v.max_frames_per_step},
          {"min_lead_in", v.min_lead_in},
          {"max_lead_in", v.max_lead_in},
          {"distractor_rate", v.distractor_rate},
          {"min_steps", v.min_steps},
          {"max_steps", v.max_steps}};
}

const char* mode_name(DecodeMode m) { return m == DecodeMode::fixed ? "fixed" : "adaptive"; }
const char* mode_name(AlignMode m) { return m == AlignMode::literal ? "literal" : "ordered"; }

// Reads only keys that are present; rejects keys it does not know.
class Reader {
 public:
  Reader(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw Error("invalid config", where_ + " must be an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) throw Error("invalid config", "unknown key '" + where_ + key + "'");
    }
  }

  template <typename T>
  void operator()(const char* key, T& dst) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      dst = j_.at(key).get<T>();
    } catch (const Json::exception& e) {
      throw Error("invalid config", where_ + key + ": " + e.what());
    }
  }
  const Json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_video(const Json* j, VideoConfig& v, const std::string& where) {
  if (!j) return;
  Reader r(*j, where);
  r("sigma", v.sigma);
  r("min_frames_per_step", v.min_frames_per_step);
  r("max_frames_per_step", v.max_frames_per_step);
  r("min_lead_in", v.min_lead_in);
  r("max_lead_in", v.max_lead_in);
  r("distractor_rate", v.distractor_rate);
  r("min_steps", v.min_steps);
  r("max_steps", v.max_steps);
}

}  // namespace

Json to_json(const ExperimentConfig& c) {
  const auto& w = c.world;
  const auto& p = c.planner;
  return {
      {"preset", c.preset},
      {"seed", c.seed},
      {"world",
       {{"num_tasks", w.num_tasks},
        {"actions_per_task", w.actions_per_task},
        {"d_model", w.d_model},
        {"shared_attributes", w.shared_attributes},
        {"horizon_min", w.horizon_min},
        {"horizon_max", w.horizon_max},
        {"attribute_scale", w.attribute_scale},
        {"activity_scale", w.activity_scale},
        {"offset_scale", w.offset_scale},
        {"skip_probability", w.skip_probability},
        {"max_skip", w.max_skip}}},
      {"data",
       {{"sources_per_task", c.sources_per_task},
        {"horizons", c.horizons},
        {"split_ratio", c.split_ratio},
        {"annotated", video_json(c.annotated)},
        {"unannotated_per_task", c.unannotated_per_task},
        {"unannotated", video_json(c.unannotated)},
        {"discrepancy_probability", c.discrepancy_probability},
        {"pseudo_fraction", c.pseudo_fraction}}},
      {"grounding", {{"perc", c.grounding.perc}, {"mode", mode_name(c.grounding.mode)}}},
      {"planner",
       {{"layers", p.layers},
        {"heads", p.heads},
        {"mlp_ratio", p.mlp_ratio},
        {"max_decode_length", p.max_decode_length},
        {"mode", mode_name(p.mode)},
        {"fixed_horizon", p.fixed_horizon},
        {"raw_feedback", p.raw_feedback},
        {"head_init", p.head_init}}},
      {"classifier",
       {{"hidden", c.classifier.hidden},
        {"epochs", c.classifier.fit.epochs},
        {"batch_size", c.classifier.fit.batch_size},
        {"validation_fraction", c.classifier.validation_fraction}}},
      {"retrieval",
       {{"memory_size", c.retrieval.memory_size},
        {"top_k", c.retrieval.top_k},
        {"lambda", c.retrieval.lambda},
        {"temperature", c.retrieval.temperature}}},
      {"training",
       {{"lr", c.optimizer.lr},
        {"beta1", c.optimizer.beta1},
        {"beta2", c.optimizer.beta2},
        {"eps", c.optimizer.eps},
        {"weight_decay", c.optimizer.weight_decay},
        {"plateau_factor", c.scheduler.factor},
        {"plateau_patience", c.scheduler.patience},
        {"plateau_threshold", c.scheduler.threshold},
        {"min_lr", c.scheduler.min_lr},
        {"batch_size", c.batch_size},
        {"stage1_epochs", c.stage1_epochs},
        {"stage2_epochs", c.stage2_epochs},
        {"stage2_lr", c.stage2_lr},
        {"epoch_scale", c.epoch_scale},
        {"validation_fraction", c.validation_fraction}}},
  };
}

ExperimentConfig config_from_json(const Json& j) {
  if (!j.is_object()) throw Error("invalid config", "config must be a JSON object");
  ExperimentConfig c = ExperimentConfig::preset_named(j.value("preset", std::string("crosstask-like")));
  {
    Reader r(j, "");
    r("preset", c.preset);
    r("seed", c.seed);
    if (const Json* w = r.child("world")) {
      Reader rw(*w, "world.");
      rw("num_tasks", c.world.num_tasks);
      rw("actions_per_task", c.world.actions_per_task);
      rw("d_model", c.world.d_model);
      rw("shared_attributes", c.world.shared_attributes);
      rw("horizon_min", c.world.horizon_min);
      rw("horizon_max", c.world.horizon_max);
      rw("attribute_scale", c.world.attribute_scale);
      rw("activity_scale", c.world.activity_scale);
      rw("offset_scale", c.world.offset_scale);
      rw("skip_probability", c.world.skip_probability);
      rw("max_skip", c.world.max_skip);
    }
    if (const Json* d = r.child("data")) {
      Reader rd(*d, "data.");
      rd("sources_per_task", c.sources_per_task);
      rd("horizons", c.horizons);
      rd("split_ratio", c.split_ratio);
      read_video(rd.child("annotated"), c.annotated, "data.annotated.");
      rd("unannotated_per_task", c.unannotated_per_task);
      read_video(rd.child("unannotated"), c.unannotated, "data.unannotated.");
      rd("discrepancy_probability", c.discrepancy_probability);
      rd("pseudo_fraction", c.pseudo_fraction);
    }
    if (const Json* g = r.child("grounding")) {
      Reader rg(*g, "grounding.");
      rg("perc", c.grounding.perc);
      std::string mode = mode_name(c.grounding.mode);
      rg("mode", mode);
      if (mode != "ordered" && mode != "literal") throw Error("invalid config", "grounding.mode: " + mode);
      c.grounding.mode = mode == "literal" ? AlignMode::literal : AlignMode::ordered;
    }
    if (const Json* p = r.child("planner")) {
      Reader rp(*p, "planner.");
      rp("layers", c.planner.layers);
      rp("heads", c.planner.heads);
      rp("mlp_ratio", c.planner.mlp_ratio);
      rp("max_decode_length", c.planner.max_decode_length);
      std::string mode = mode_name(c.planner.mode);
      rp("mode", mode);
      if (mode != "adaptive" && mode != "fixed") throw Error("invalid config", "planner.mode: " + mode);
      c.planner.mode = mode == "fixed" ? DecodeMode::fixed : DecodeMode::adaptive;
      rp("fixed_horizon", c.planner.fixed_horizon);
      rp("raw_feedback", c.planner.raw_feedback);
      rp("head_init", c.planner.head_init);
    }
    if (const Json* k = r.child("classifier")) {
      Reader rk(*k, "classifier.");
      rk("hidden", c.classifier.hidden);
      rk("epochs", c.classifier.fit.epochs);
      rk("batch_size", c.classifier.fit.batch_size);
      rk("validation_fraction", c.classifier.validation_fraction);
    }
    if (const Json* m = r.child("retrieval")) {
      Reader rm(*m, "retrieval.");
      rm("memory_size", c.retrieval.memory_size);
      rm("top_k", c.retrieval.top_k);
      rm("lambda", c.retrieval.lambda);
      rm("temperature", c.retrieval.temperature);
    }
    if (const Json* t = r.child("training")) {
      Reader rt(*t, "training.");
      rt("lr", c.optimizer.lr);
      rt("beta1", c.optimizer.beta1);
      rt("beta2", c.optimizer.beta2);
      rt("eps", c.optimizer.eps);
      rt("weight_decay", c.optimizer.weight_decay);
      rt("plateau_factor", c.scheduler.factor);
      rt("plateau_patience", c.scheduler.patience);
      rt("plateau_threshold", c.scheduler.threshold);
      rt("min_lr", c.scheduler.min_lr);
      rt("batch_size", c.batch_size);
      rt("stage1_epochs", c.stage1_epochs);
      rt("stage2_epochs", c.stage2_epochs);
      rt("stage2_lr", c.stage2_lr);
      rt("epoch_scale", c.epoch_scale);
      rt("validation_fraction", c.validation_fraction);
    }
  }
  c.planner.d_model = c.world.d_model;
  c.validate();
  return c;
}

std::uint64_t config_hash(const ExperimentConfig& config) { return fnv1a(to_json(config).dump()); }

// ---- data ---------------------------------------------------------------------

GeneratedData generate_data(const ExperimentConfig& config) {
  config.validate();
  const std::uint64_t seed = config.seed;
  GeneratedData data{World::generate(config.world, derive_seed(seed, 1)), {}, {}, {}, {}};
  const int tasks = data.world.num_tasks();

  for (int t = 0; t < tasks; ++t) {
    for (int i = 0; i < config.sources_per_task; ++i) {
      const int id = t * config.sources_per_task + i;
      data.sources.push_back(
          {id, synthesize_unannotated_video(data.world, t, config.annotated, {}, derive_seed(seed, 2, static_cast<std::uint64_t>(id)))});
    }
  }
  data.split = make_splits(data.sources, config.horizons, config.split_ratio, derive_seed(seed, 3));

  for (int t = 0; t < tasks; ++t) {
    for (int i = 0; i < config.unannotated_per_task; ++i) {
      const auto u = static_cast<std::uint64_t>(t * config.unannotated_per_task + i);
      Rng rng(derive_seed(seed, 4, u));
      std::bernoulli_distribution coin(config.discrepancy_probability);
      Discrepancies d;
      d.missing_step = coin(rng);
      d.order_mismatch = coin(rng);
      d.extra_step = coin(rng);
      auto video = synthesize_unannotated_video(data.world, t, config.unannotated, d, derive_seed(seed, 5, u));
      data.plans.push_back(video.nominal_plan);
      data.videos.push_back(std::move(video));
    }
  }
  return data;
}

void write_data(const GeneratedData& data, const std::filesystem::path& dir) {
  const auto& vocab = data.world.vocab();
  write_json(dir / "vocab.json", to_json(vocab));
  write_json(dir / "tasks.json", tasks_to_json(data.world));
  write_samples(dir / "train.jsonl", data.split.train, vocab);
  write_samples(dir / "test.jsonl", data.split.test, vocab);
  write_videos(dir / "videos.jsonl", data.videos, vocab);
  write_plans(dir / "plans.jsonl", data.plans, vocab);
}

std::vector<Sample> ground_videos(const std::vector<SyntheticVideo>& videos, const std::vector<Plan>& plans,
                                  const ActionVocabulary& vocab, const GroundingConfig& grounding,
                                  double pseudo_fraction, int first_source_id) {
  if (videos.size() != plans.size()) throw Error("shape mismatch", "one plan per video is required");
  if (!(pseudo_fraction >= 0.0 && pseudo_fraction <= 100.0)) throw Error("invalid config", "fraction in [0, 100]");
  std::map<int, int> per_task;
  for (const auto& v : videos) ++per_task[v.task_id];
  std::map<int, int> used;
  std::vector<Sample> out;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const int task = videos[i].task_id;
    const auto quota = static_cast<int>(std::lround(pseudo_fraction / 100.0 * per_task[task]));
    if (used[task] >= quota) continue;
    ++used[task];
    if (auto s = emit_pseudo_annotation(videos[i], plans[i], vocab, grounding, first_source_id + static_cast<int>(i))) {
      out.push_back(std::move(*s));
    }
  }
  return out;
}

// ---- models -------------------------------------------------------------------

DecodeResult ModelBundle::decode(const Observation& obs) const {
  const auto task = classifier.classify(obs.start, obs.goal);
  return rap ? rap->decode(obs.start, obs.goal, task, decode_options())
             : base.decode(obs.start, obs.goal, task, decode_options());
}

namespace {

nn::FitConfig fit_config(const ExperimentConfig& c, int epochs, std::uint64_t seed) {
  nn::FitConfig f;
  f.epochs = epochs;
  f.batch_size = c.batch_size;
  f.optimizer = c.optimizer;
  f.scheduler = c.scheduler;
  f.seed = seed;
  return f;
}

}  // namespace

StageResult train_stage1(const ExperimentConfig& config, const ActionVocabulary& vocab, const Matrix& task_embeddings,
                         const std::vector<Sample>& train, const std::vector<Sample>& pseudo) {
  config.validate();
  StageResult r;
  r.bundle.stage = 1;
  r.bundle.vocab = vocab;
  ClassifierConfig cc = config.classifier;
  cc.fit.optimizer = config.optimizer;
  cc.fit.scheduler = config.scheduler;
  r.bundle.classifier = train_task_classifier(train, task_embeddings, cc, derive_seed(config.seed, 6));
  r.bundle.base = BasePlanner(config.planner, vocab, derive_seed(config.seed, 7));
  TrainConfig tc{fit_config(config, config.scaled_stage1_epochs(), derive_seed(config.seed, 8)),
                 config.validation_fraction};
  r.fit = stage1_train(r.bundle.base, r.bundle.classifier, train, pseudo, tc);
  return r;
}

StageResult train_stage2(const ExperimentConfig& config, const ModelBundle& stage1, const std::vector<Sample>& train,
                         const std::vector<Sample>& pseudo) {
  config.validate();
  if (stage1.stage != 1) throw Error("invalid checkpoint", "stage 2 must start from a stage-1 model");
  StageResult r;
  r.bundle.stage = 2;
  r.bundle.vocab = stage1.vocab;
  r.bundle.classifier = stage1.classifier;
  RetrievalPlanner rap(stage1.base, config.retrieval, derive_seed(config.seed, 9));
  TrainConfig tc{fit_config(config, config.scaled_stage2_epochs(), derive_seed(config.seed, 10)),
                 config.validation_fraction};
  tc.fit.optimizer.lr = config.stage2_lr;
  r.fit = stage2_train(rap, r.bundle.classifier, train, pseudo, tc);
  r.bundle.base = rap.base();
  r.bundle.rap = std::move(rap);
  return r;
}

nn::Checkpoint to_checkpoint(const ModelBundle& bundle, const ExperimentConfig& config) {
  nn::Checkpoint ck;
  ck.config_hash = config_hash(config);
  std::ostringstream rng_state;
  rng_state << Rng(derive_seed(config.seed, bundle.stage == 1 ? 8 : 10));
  ck.rng_state = rng_state.str();
  Json names = Json::array();
  for (const auto& e : bundle.vocab.entries()) names.push_back(e.name);
  ck.metadata = {{"stage", bundle.stage},
                 {"config", to_json(config)},
                 {"vocab", names},
                 {"classifier_hidden", bundle.classifier.hidden()}};
  ck.tensors.emplace_back("vocab.embeddings", bundle.vocab.embeddings());
  ck.tensors.emplace_back("classifier.task_embeddings", bundle.classifier.task_embeddings());
  ck.add_store(bundle.classifier.params());
  if (bundle.rap) {
    ck.metadata["memory_values"] = bundle.rap->values();
    ck.add_store(bundle.rap->params());
  } else {
    ck.add_store(bundle.base.params());
  }
  return ck;
}

ExperimentConfig config_from_checkpoint(const nn::Checkpoint& ckpt) {
  if (!ckpt.metadata.contains("config")) throw Error("invalid checkpoint", "no experiment config in metadata");
  return config_from_json(ckpt.metadata.at("config"));
}

ModelBundle bundle_from_checkpoint(const nn::Checkpoint& ckpt) {
  const ExperimentConfig config = config_from_checkpoint(ckpt);
  if (ckpt.config_hash != config_hash(config)) throw Error("invalid checkpoint", "config hash mismatch");
  ModelBundle b;
  b.stage = ckpt.metadata.at("stage").get<int>();
  if (b.stage != 1 && b.stage != 2) throw Error("invalid checkpoint", "unknown stage");

  const Matrix& emb = ckpt.tensor("vocab.embeddings");
  const auto names = ckpt.metadata.at("vocab").get<std::vector<std::string>>();
  if (static_cast<Eigen::Index>(names.size()) != emb.cols()) throw Error("invalid checkpoint", "vocab size mismatch");
  std::vector<VocabEntry> entries;
  for (std::size_t i = 0; i < names.size(); ++i) {
    entries.push_back({static_cast<ActionId>(i), names[i], emb.col(static_cast<Eigen::Index>(i))});
  }
  b.vocab = ActionVocabulary(std::move(entries));

  b.classifier = TaskClassifier(b.vocab.dim(), ckpt.tensor("classifier.task_embeddings"),
                                ckpt.metadata.at("classifier_hidden").get<int>(), 0);
  ckpt.fill_store(b.classifier.params());

  BasePlanner base(config.planner, b.vocab, 0);
  if (b.stage == 2) {
    RetrievalPlanner rap(std::move(base), config.retrieval, 0);
    ckpt.fill_store(rap.params());
    rap.set_values(ckpt.metadata.at("memory_values").get<std::vector<ActionId>>());
    b.base = rap.base();
    b.rap = std::move(rap);
  } else {
    ckpt.fill_store(base.params());
    b.base = std::move(base);
  }
  return b;
}

std::vector<Plan> plan_samples(const ModelBundle& bundle, const std::vector<Sample>& samples) {
  std::vector<Plan> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(bundle.decode(s.observation).plan);
  return out;
}

MetricsReport evaluate(const ModelBundle& bundle, const std::vector<Sample>& samples) {
  std::vector<Plan> gts;
  gts.reserve(samples.size());
  for (const auto& s : samples) gts.push_back(s.plan);
  return aggregate(plan_samples(bundle, samples), gts);
}

// ---- pipeline -----------------------------------------------------------------

Json to_json(const RunManifest& m) {
  Json stages = Json::array();
  for (const auto& s : m.stages) stages.push_back({{"name", s.name}, {"status", s.status}, {"seconds", s.seconds}});
  Json artifacts = Json::object();
  for (const auto& [file, id] : m.artifacts) artifacts[file] = id;
  return {{"config_hash", m.config_hash},
          {"stages", stages},
          {"artifacts", artifacts},
          {"total_seconds", m.total_seconds},
          {"complete", m.complete}};
}

namespace {

Json fit_summary(const nn::FitResult& fit) {
  return {{"epochs", static_cast<int>(fit.history.size()) - 1},
          {"best_epoch", fit.best_epoch},
          {"best_validation_loss", fit.best_validation_loss}};
}

using Clock = std::chrono::steady_clock;

class StageTimer {
 public:
  explicit StageTimer(RunManifest& m) : m_(m) {}

  template <typename F>
  void run(const std::string& name, F&& body) {
    const auto t0 = Clock::now();
    m_.stages.push_back({name, "running", 0.0});
    body();
    m_.stages.back().status = "complete";
    m_.stages.back().seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  }
  void skip(const std::string& name) { m_.stages.push_back({name, "skipped", 0.0}); }

 private:
  RunManifest& m_;
};

}  // namespace

RunManifest run_pipeline(const ExperimentConfig& config, const std::filesystem::path& out) {
  config.validate();
  std::filesystem::create_directories(out);
  RunManifest manifest;
  manifest.config_hash = hex64(config_hash(config));
  const auto start = Clock::now();
  std::vector<std::string> files;
  auto finish = [&](bool complete) {
    manifest.complete = complete;
    manifest.total_seconds = std::chrono::duration<double>(Clock::now() - start).count();
    manifest.artifacts.clear();
    for (const auto& f : files) {
      if (std::filesystem::exists(out / f)) manifest.artifacts.emplace_back(f, hex64(fnv1a(read_text(out / f))));
    }
    write_json(out / "manifest.json", to_json(manifest));
  };

  StageTimer timer(manifest);
  try {
    GeneratedData data;
    timer.run("gen-data", [&] {
      data = generate_data(config);
      write_data(data, out);
      files.insert(files.end(), {"vocab.json", "tasks.json", "train.jsonl", "test.jsonl", "videos.jsonl", "plans.jsonl"});
    });
    const auto& vocab = data.world.vocab();

    std::vector<Sample> pseudo;
    if (config.pseudo_fraction > 0.0) {
      timer.run("ground", [&] {
        pseudo = ground_videos(data.videos, data.plans, vocab, config.grounding, config.pseudo_fraction,
                               static_cast<int>(data.sources.size()));
        write_samples(out / "pseudo.jsonl", pseudo, vocab);
        files.push_back("pseudo.jsonl");
      });
    } else {
      timer.skip("ground");
    }

    StageResult s1, s2;
    timer.run("train-stage1", [&] {
      s1 = train_stage1(config, vocab, data.world.task_embeddings(), data.split.train, pseudo);
      nn::save_checkpoint(to_checkpoint(s1.bundle, config), out / "stage1.ckpt");
      files.push_back("stage1.ckpt");
    });
    timer.run("train-stage2", [&] {
      const ModelBundle init = bundle_from_checkpoint(nn::load_checkpoint(out / "stage1.ckpt"));
      s2 = train_stage2(config, init, data.split.train, pseudo);
      nn::save_checkpoint(to_checkpoint(s2.bundle, config), out / "stage2.ckpt");
      files.push_back("stage2.ckpt");
    });

    Json report;
    timer.run("eval", [&] {
      const auto bp = evaluate(s1.bundle, data.split.test);
      const auto rap = evaluate(s2.bundle, data.split.test);
      report = {{"config_hash", manifest.config_hash},
                {"preset", config.preset},
                {"seed", config.seed},
                {"pseudo_fraction", config.pseudo_fraction},
                {"dataset",
                 {{"train", data.split.train.size()},
                  {"test", data.split.test.size()},
                  {"train_sources", data.split.train_sources.size()},
                  {"test_sources", data.split.test_sources.size()},
                  {"videos", data.videos.size()},
                  {"pseudo", pseudo.size()}}},
                {"classifier_accuracy", 100.0 * classifier_accuracy(s1.bundle.classifier, data.split.test)},
                {"random_length_baseline", 100.0 / static_cast<double>(config.horizons.size())},
                {"training", {{"stage1", fit_summary(s1.fit)}, {"stage2", fit_summary(s2.fit)}}},
                {"models", {{"BP", to_json(bp)}, {"RAP", to_json(rap)}}}};
      write_json(out / "report.json", report);
      files.push_back("report.json");
    });
    timer.run("report", [&] {
      write_text(out / "report.txt", render_table(report));
      files.push_back("report.txt");
    });
  } catch (...) {
    if (!manifest.stages.empty() && manifest.stages.back().status == "running") manifest.stages.back().status = "failed";
    finish(false);
    throw;
  }
  finish(true);
  return manifest;
}

Json compare_rows(const Json& report) {
  Json rows = Json::array();
  for (const char* label : {"BP", "RAP"}) {
    Json row = report.at("models").at(label);
    row["label"] = label;
    rows.push_back(row);
  }
  return {{"rows", rows}};
}

Json compare_bp_rap(const ExperimentConfig& config, const std::filesystem::path& out) {
  run_pipeline(config, out);
  return compare_rows(read_json(out / "report.json"));
}

SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "layers_heads") return SweepAxis::layers_heads;
  if (name == "memory_size") return SweepAxis::memory_size;
  if (name == "lambda") return SweepAxis::lambda;
  if (name == "pseudo_fraction") return SweepAxis::pseudo_fraction;
  throw Error("invalid axis", "'" + name + "' (expected layers_heads, memory_size, lambda or pseudo_fraction)");
}

std::string axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::layers_heads: return "layers_heads";
    case SweepAxis::memory_size: return "memory_size";
    case SweepAxis::lambda: return "lambda";
    case SweepAxis::pseudo_fraction: return "pseudo_fraction";
  }
  return "";
}

namespace {

double parse_number(const std::string& text) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size()) throw Error("invalid value", "'" + text + "' is not a number");
  return v;
}

ExperimentConfig with_value(ExperimentConfig c, SweepAxis axis, const std::string& value) {
  switch (axis) {
    case SweepAxis::layers_heads: {
      const auto x = value.find('x');
      if (x == std::string::npos) throw Error("invalid value", "layers_heads values look like 2x4");
      c.planner.layers = static_cast<int>(parse_number(value.substr(0, x)));
      c.planner.heads = static_cast<int>(parse_number(value.substr(x + 1)));
      break;
    }
    case SweepAxis::memory_size: c.retrieval.memory_size = static_cast<int>(parse_number(value)); break;
    case SweepAxis::lambda: c.retrieval.lambda = parse_number(value); break;
    case SweepAxis::pseudo_fraction: c.pseudo_fraction = parse_number(value); break;
  }
  c.validate();
  return c;
}

}  // namespace

Json sweep(const ExperimentConfig& config, SweepAxis axis, const std::vector<std::string>& values,
           const std::filesystem::path& out) {
  if (values.empty()) throw Error("invalid value", "sweep needs at least one value");
  std::vector<ExperimentConfig> configs;
  for (const auto& v : values) configs.push_back(with_value(config, axis, v));
  Json rows = Json::array();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto dir = out / (axis_name(axis) + "=" + values[i]);
    run_pipeline(configs[i], dir);
    const Json report = read_json(dir / "report.json");
    Json row = {{"value", values[i]}};
    for (const char* label : {"BP", "RAP"}) row[label] = report.at("models").at(label);
    rows.push_back(row);
  }
  return {{"axis", axis_name(axis)}, {"rows", rows}};
}

// ---- rendering ----------------------------------------------------------------

namespace {

struct Row {
  std::string label;
  Json metrics;
};

std::vector<Row> table_rows(const Json& report) {
  std::vector<Row> rows;
  if (report.contains("axis")) {
    for (const auto& r : report.at("rows")) {
      for (const char* label : {"BP", "RAP"}) {
        rows.push_back({report.at("axis").get<std::string>() + "=" + r.at("value").get<std::string>() + " " + label,
                        r.at(label)});
      }
    }
  } else if (report.contains("models")) {
    for (const char* label : {"BP", "RAP"}) {
      if (report.at("models").contains(label)) rows.push_back({label, report.at("models").at(label)});
    }
  } else if (report.contains("rows")) {
    for (const auto& r : report.at("rows")) rows.push_back({r.value("label", std::string("model")), r});
  } else if (report.contains("sr")) {
    rows.push_back({"model", report});
  } else {
    throw Error("invalid report", "nothing to render");
  }
  return rows;
}

std::vector<int> horizons_of(const std::vector<Row>& rows) {
  std::set<int> hs;
  for (const auto& r : rows) {
    for (const auto& [key, _] : r.metrics.at("per_horizon").items()) hs.insert(std::stoi(key));
  }
  return {hs.begin(), hs.end()};
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

double horizon_sr(const Json& m, int t) {
  const auto key = std::to_string(t);
  return m.at("per_horizon").contains(key) ? m.at("per_horizon").at(key).at("sr").get<double>() : 0.0;
}

}  // namespace

std::string render_table(const Json& report) {
  const auto rows = table_rows(report);
  const auto hs = horizons_of(rows);
  std::size_t width = 5;
  for (const auto& r : rows) width = std::max(width, r.label.size());

  std::vector<std::string> header{"SR", "mAcc", "mIoU", "mES", "LenAcc"};
  for (int t : hs) header.push_back("SR@T=" + std::to_string(t));
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(width), "Model");
  os << buf;
  for (const auto& h : header) {
    std::snprintf(buf, sizeof buf, " %9s", h.c_str());
    os << buf;
  }
  os << "\n" << std::string(width + 10 * header.size(), '-') << "\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(width), r.label.c_str());
    os << buf;
    std::vector<double> cells{m.at("sr").get<double>(), m.at("macc").get<double>(), m.at("miou").get<double>(),
                              m.at("mes").get<double>(), m.at("length_accuracy").get<double>()};
    for (int t : hs) cells.push_back(horizon_sr(m, t));
    for (double c : cells) {
      std::snprintf(buf, sizeof buf, " %9s", fmt(c).c_str());
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

std::string render_csv(const Json& report) {
  const auto rows = table_rows(report);
  const auto hs = horizons_of(rows);
  std::ostringstream os;
  os << "model,sr,macc,miou,mes,length_accuracy";
  for (int t : hs) os << ",sr_t" << t;
  os << "\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    os << r.label << "," << fmt(m.at("sr").get<double>()) << "," << fmt(m.at("macc").get<double>()) << ","
       << fmt(m.at("miou").get<double>()) << "," << fmt(m.at("mes").get<double>()) << ","
       << fmt(m.at("length_accuracy").get<double>());
    for (int t : hs) os << "," << fmt(horizon_sr(m, t));
    os << "\n";
  }
  return os.str();
}

}  // namespace rap
