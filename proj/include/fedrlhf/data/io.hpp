#pragma once

// File formats. Everything is JSON or JSON lines except parameter
// checkpoints (see fed/checkpoint.hpp).

#include "fedrlhf/biscuit/fedbiscuit.hpp"
#include "fedrlhf/data/partition.hpp"
#include "fedrlhf/data/world.hpp"
#include "fedrlhf/eval/metrics.hpp"
#include "fedrlhf/rlft/rlft.hpp"

#include <json.hpp>

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedrlhf {

using Json = nlohmann::ordered_json;

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Reads fields of a JSON object by name. finish() throws ConfigError naming
// the first key that was never read; errors carry the dotted field path.
class StrictObject {
 public:
  StrictObject(const Json& j, std::string path);

  bool has(const std::string& key) const;
  const Json& require(const std::string& key);
  template <typename T>
  void read(const std::string& key, T& out);
  template <typename T>
  T get(const std::string& key);
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  void finish() const;

 private:
  const Json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

template <typename T>
void StrictObject::read(const std::string& key, T& out) {
  if (!has(key)) return;
  out = get<T>(key);
}

template <typename T>
T StrictObject::get(const std::string& key) {
  const Json& v = require(key);
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(field(key) + ": wrong type (" + std::string(v.type_name()) + ")");
  }
}

// Throws IngestionError naming the path and line.
Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& value);
void write_text(const std::filesystem::path& path, const std::string& text);

// {"prompt": [..], "chosen": [..], "rejected": [..], "worker": str?, "domain": str?, "prompt_id": str}
RawPreferencePair preference_from_json(const Json& record);
Json to_json(const RawPreferencePair& pair);
std::vector<RawPreferencePair> read_preferences(const std::filesystem::path& path);
void write_preferences(const std::filesystem::path& path, std::span<const RawPreferencePair> pairs);

// Rejects unknown keys; absent keys keep their values from `base`.
SyntheticWorldSpec world_spec_from_json(const Json& j, const std::string& where = "world",
                                        SyntheticWorldSpec base = {});
Json to_json(const SyntheticWorldSpec& spec);

// Spec plus the derived vocabulary, reward weights, cluster mass and latent
// assignment. Reading regenerates the world from the spec and checks that the
// stored arrays agree.
Json world_to_json(const SyntheticWorld& world);
SyntheticWorld world_from_json(const Json& j);

Json partition_to_json(const Partition& partition, const std::string& scheme);
Partition partition_from_json(const Json& j);

Json to_json(const GeneratedPreferenceRecord& record);
GeneratedPreferenceRecord generated_record_from_json(const Json& j);
void write_generated(const std::filesystem::path& path, const GeneratedPreferenceDataset& dataset);
GeneratedPreferenceDataset read_generated(const std::filesystem::path& path);

Json to_json(const RoundLog& log);
void write_round_logs(const std::filesystem::path& path, std::span<const RoundLog> logs);
// round,phase,selector,sampled,mean_local_loss,checksum,broadcast_bytes,upload_bytes,grouping_bytes
std::string round_logs_csv(std::span<const RoundLog> logs);

Json assignments_to_json(std::span<const AssignmentRecord> history);

Json to_json(const EvalReport& report);
// round,metric,value
std::string series_csv(std::span<const EvalReport> reports);

std::string to_hex(std::uint64_t v);

}  // namespace fedrlhf
