#pragma once

// Versioned binary checkpoint container:
//
//   magic "RAPCKPT\0" | u32 format_version | u64 config_hash
//   | str rng_state | str metadata (JSON) | u32 tensor_count
//   | { str name | u64 rows | u64 cols | rows*cols f64, column-major }*
//
// Strings are u32 length-prefixed. All integers and doubles little-endian.

#include "rap/nn/parameters.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace rap::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t format_version = kCheckpointVersion;
  std::uint64_t config_hash = 0;
  std::string rng_state;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::pair<std::string, Matrix>> tensors;

  const Matrix& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;
  /// Appends every parameter of `store`, names unchanged.
  void add_store(const ParameterStore& store);
  /// Loads values for every parameter of `store` from the tensors.
  void fill_store(ParameterStore& store) const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rap::nn
