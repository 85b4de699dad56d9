#pragma once

// JSON / JSON-lines persistence for datasets, videos, vocabularies and
// reports. Actions are written by name; readers resolve names through a
// vocabulary.

#include "rap/domain.hpp"
#include "rap/metrics.hpp"
#include "rap/synthworld.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace rap {

using Json = nlohmann::json;

Json to_json(const Vector& v);
Vector vector_from_json(const Json& j);
Json to_json(const Matrix& m);  // list of columns
Matrix matrix_from_json(const Json& j);

Json to_json(const ActionVocabulary& vocab);
ActionVocabulary vocabulary_from_json(const Json& j);

Json to_json(const Plan& plan, const ActionVocabulary& vocab);
Plan plan_from_json(const Json& j, const ActionVocabulary& vocab);

Json to_json(const Sample& sample, const ActionVocabulary& vocab);
Sample sample_from_json(const Json& j, const ActionVocabulary& vocab);

Json to_json(const SyntheticVideo& video, const ActionVocabulary& vocab);
SyntheticVideo video_from_json(const Json& j, const ActionVocabulary& vocab);

Json tasks_to_json(const World& world);

Json to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const Json& j);

// ---- files ----

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j);

std::vector<Json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows);

std::vector<Sample> read_samples(const std::filesystem::path& path, const ActionVocabulary& vocab);
void write_samples(const std::filesystem::path& path, const std::vector<Sample>& samples, const ActionVocabulary& vocab);

std::vector<SyntheticVideo> read_videos(const std::filesystem::path& path, const ActionVocabulary& vocab);
void write_videos(const std::filesystem::path& path, const std::vector<SyntheticVideo>& videos,
                  const ActionVocabulary& vocab);

std::vector<Plan> read_plans(const std::filesystem::path& path, const ActionVocabulary& vocab);
void write_plans(const std::filesystem::path& path, const std::vector<Plan>& plans, const ActionVocabulary& vocab);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

}  // namespace rap
