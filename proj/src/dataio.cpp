#include "rap/dataio.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace rap {

Json to_json(const Vector& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Vector vector_from_json(const Json& j) {
  if (!j.is_array()) throw Error("invalid json", "expected a number array");
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Json to_json(const Matrix& m) {
  Json cols = Json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c) cols.push_back(to_json(Vector(m.col(c))));
  return cols;
}

Matrix matrix_from_json(const Json& j) {
  if (!j.is_array()) throw Error("invalid json", "expected a list of columns");
  if (j.empty()) return Matrix();
  const Vector first = vector_from_json(j[0]);
  Matrix m(first.size(), static_cast<Eigen::Index>(j.size()));
  for (std::size_t c = 0; c < j.size(); ++c) {
    const Vector col = vector_from_json(j[c]);
    if (col.size() != m.rows()) throw Error("invalid json", "ragged matrix");
    m.col(static_cast<Eigen::Index>(c)) = col;
  }
  return m;
}

Json to_json(const ActionVocabulary& vocab) {
  Json out = Json::array();
  for (const auto& e : vocab.entries()) out.push_back({{"id", e.id}, {"name", e.name}, {"embedding", to_json(e.embedding)}});
  return out;
}

ActionVocabulary vocabulary_from_json(const Json& j) {
  std::vector<VocabEntry> entries;
  for (const auto& e : j) {
    entries.push_back({e.at("id").get<ActionId>(), e.at("name").get<std::string>(), vector_from_json(e.at("embedding"))});
  }
  return ActionVocabulary(std::move(entries));
}

namespace {

Json action_names(const std::vector<ActionId>& actions, const ActionVocabulary& vocab) {
  Json out = Json::array();
  for (auto a : actions) out.push_back(vocab.name(a));
  return out;
}

std::vector<ActionId> action_ids(const Json& j, const ActionVocabulary& vocab) {
  std::vector<ActionId> out;
  for (const auto& name : j) out.push_back(vocab.lookup(name.get<std::string>()));
  return out;
}

}  // namespace

Json to_json(const Plan& plan, const ActionVocabulary& vocab) {
  return {{"task_id", plan.task_id}, {"actions", action_names(plan.actions, vocab)}};
}

Plan plan_from_json(const Json& j, const ActionVocabulary& vocab) {
  Plan p{j.at("task_id").get<int>(), action_ids(j.at("actions"), vocab)};
  validate_plan(p, vocab);
  return p;
}

Json to_json(const Sample& s, const ActionVocabulary& vocab) {
  return {{"task_id", s.observation.task_id},
          {"v_s", to_json(s.observation.start)},
          {"v_g", to_json(s.observation.goal)},
          {"actions", action_names(s.plan.actions, vocab)},
          {"source_id", s.source_id}};
}

Sample sample_from_json(const Json& j, const ActionVocabulary& vocab) {
  Sample s;
  s.observation.task_id = j.at("task_id").get<int>();
  s.observation.start = vector_from_json(j.at("v_s"));
  s.observation.goal = vector_from_json(j.at("v_g"));
  s.plan = Plan{s.observation.task_id, action_ids(j.at("actions"), vocab)};
  s.source_id = j.at("source_id").get<int>();
  if (s.observation.start.size() != vocab.dim() || s.observation.goal.size() != vocab.dim()) {
    throw Error("dimension mismatch", "sample embeddings differ from vocabulary dimension");
  }
  validate_plan(s.plan, vocab);
  return s;
}

Json to_json(const SyntheticVideo& v, const ActionVocabulary& vocab) {
  Json frames = Json::array();
  for (const auto& f : v.frames) frames.push_back(to_json(f));
  Json segments = Json::array();
  for (const auto& s : v.segments) {
    segments.push_back({{"t_start", s.t_start}, {"t_end", s.t_end}, {"action", vocab.name(s.action)}});
  }
  return {{"task_id", v.task_id},
          {"frames", frames},
          {"nominal_plan", action_names(v.nominal_plan.actions, vocab)},
          {"hidden_segments", segments},
          {"discrepancies",
           {{"missing_step", v.injected.missing_step},
            {"order_mismatch", v.injected.order_mismatch},
            {"extra_step", v.injected.extra_step}}}};
}

SyntheticVideo video_from_json(const Json& j, const ActionVocabulary& vocab) {
  SyntheticVideo v;
  v.task_id = j.at("task_id").get<int>();
  for (const auto& f : j.at("frames")) v.frames.push_back(vector_from_json(f));
  v.nominal_plan = Plan{v.task_id, action_ids(j.at("nominal_plan"), vocab)};
  for (const auto& s : j.at("hidden_segments")) {
    v.segments.push_back({s.at("t_start").get<int>(), s.at("t_end").get<int>(), vocab.lookup(s.at("action").get<std::string>())});
  }
  if (j.contains("discrepancies")) {
    const auto& d = j.at("discrepancies");
    v.injected = {d.value("missing_step", false), d.value("order_mismatch", false), d.value("extra_step", false)};
  }
  return v;
}

Json tasks_to_json(const World& world) {
  Json tasks = Json::array();
  const auto& vocab = world.vocab();
  for (const auto& g : world.grammars()) {
    Json successors = Json::object();
    for (std::size_t i = 0; i < g.action_pool.size(); ++i) {
      successors[vocab.name(g.action_pool[i])] = action_names(g.successors[i], vocab);
    }
    tasks.push_back({{"task_id", g.task_id},
                     {"name", g.name},
                     {"action_pool", action_names(g.action_pool, vocab)},
                     {"successors", successors},
                     {"horizon_min", g.horizon_min},
                     {"horizon_max", g.horizon_max},
                     {"embedding", to_json(Vector(world.task_embeddings().col(g.task_id)))}});
  }
  return {{"seed", world.seed()}, {"tasks", tasks}};
}

Json to_json(const MetricsReport& r) {
  Json horizons = Json::object();
  for (const auto& [t, h] : r.per_horizon) horizons[std::to_string(t)] = {{"sr", h.sr}, {"count", h.count}};
  return {{"sr", r.sr},
          {"macc", r.macc},
          {"miou", r.miou},
          {"mes", r.mes},
          {"length_accuracy", r.length_accuracy},
          {"per_horizon", horizons},
          {"samples", r.samples},
          {"empty_pairs", r.empty_pairs}};
}

MetricsReport metrics_from_json(const Json& j) {
  MetricsReport r;
  r.sr = j.at("sr").get<double>();
  r.macc = j.at("macc").get<double>();
  r.miou = j.at("miou").get<double>();
  r.mes = j.at("mes").get<double>();
  r.length_accuracy = j.at("length_accuracy").get<double>();
  r.samples = j.at("samples").get<int>();
  r.empty_pairs = j.value("empty_pairs", 0);
  for (const auto& [key, h] : j.at("per_horizon").items()) {
    r.per_horizon[std::stoi(key)] = {h.at("sr").get<double>(), h.at("count").get<int>()};
  }
  return r;
}

// ---- files ----

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing file", path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io error", "cannot write " + path.string());
  out << text;
  if (!out) throw Error("io error", "short write to " + path.string());
}

Json read_json(const std::filesystem::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw Error("invalid json", path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

std::vector<Json> read_jsonl(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::vector<Json> rows;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      rows.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw Error("invalid json", path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return rows;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows) {
  std::string text;
  for (const auto& r : rows) text += r.dump() + "\n";
  write_text(path, text);
}

std::vector<Sample> read_samples(const std::filesystem::path& path, const ActionVocabulary& vocab) {
  std::vector<Sample> out;
  for (const auto& j : read_jsonl(path)) out.push_back(sample_from_json(j, vocab));
  return out;
}

void write_samples(const std::filesystem::path& path, const std::vector<Sample>& samples, const ActionVocabulary& vocab) {
  std::vector<Json> rows;
  for (const auto& s : samples) rows.push_back(to_json(s, vocab));
  write_jsonl(path, rows);
}

std::vector<SyntheticVideo> read_videos(const std::filesystem::path& path, const ActionVocabulary& vocab) {
  std::vector<SyntheticVideo> out;
  for (const auto& j : read_jsonl(path)) out.push_back(video_from_json(j, vocab));
  return out;
}

void write_videos(const std::filesystem::path& path, const std::vector<SyntheticVideo>& videos,
                  const ActionVocabulary& vocab) {
  std::vector<Json> rows;
  for (const auto& v : videos) rows.push_back(to_json(v, vocab));
  write_jsonl(path, rows);
}

std::vector<Plan> read_plans(const std::filesystem::path& path, const ActionVocabulary& vocab) {
  std::vector<Plan> out;
  for (const auto& j : read_jsonl(path)) out.push_back(plan_from_json(j, vocab));
  return out;
}

void write_plans(const std::filesystem::path& path, const std::vector<Plan>& plans, const ActionVocabulary& vocab) {
  std::vector<Json> rows;
  for (const auto& p : plans) rows.push_back(to_json(p, vocab));
  write_jsonl(path, rows);
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace rap
