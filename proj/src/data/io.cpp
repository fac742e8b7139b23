#include "fedrlhf/data/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fedrlhf {

StrictObject::StrictObject(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
  if (!j_.is_object()) throw ConfigError((path_.empty() ? std::string("config") : path_) + ": expected an object");
}

bool StrictObject::has(const std::string& key) const { return j_.contains(key); }

const Json& StrictObject::require(const std::string& key) {
  if (!j_.contains(key)) throw ConfigError(field(key) + ": missing required field");
  seen_.push_back(key);
  return j_.at(key);
}

void StrictObject::finish() const {
  for (const auto& [key, value] : j_.items()) {
    if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
      throw ConfigError(field(key) + ": unknown field");
    }
  }
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IngestionError(path.string() + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // write-then-rename so a crash never leaves a torn file behind
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_json(const std::filesystem::path& path, const Json& value) { write_text(path, value.dump(2) + "\n"); }

namespace {

VectorXd vector_from_json(const Json& j, const std::string& field) {
  if (!j.is_array()) throw IngestionError(field + ": expected an array of numbers");
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw IngestionError(field + ": expected an array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

Json vector_to_json(const VectorXd& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Json matrix_to_json(const MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(vector_to_json(m.row(r).transpose()));
  return rows;
}

MatrixXd matrix_from_json(const Json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) throw IngestionError(field + ": expected a non-empty array of rows");
  MatrixXd m;
  for (std::size_t r = 0; r < j.size(); ++r) {
    const VectorXd row = vector_from_json(j[r], field);
    if (r == 0) m.resize(static_cast<Eigen::Index>(j.size()), row.size());
    if (row.size() != m.cols()) throw IngestionError(field + ": ragged rows");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

template <typename F>
void for_each_line(const std::filesystem::path& path, F&& fn) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(Json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw IngestionError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const std::exception& e) {
      throw IngestionError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::string jsonl(const std::vector<Json>& records) {
  std::string out;
  for (const auto& r : records) out += r.dump() + "\n";
  return out;
}

}  // namespace

std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

RawPreferencePair preference_from_json(const Json& record) {
  if (!record.is_object()) throw IngestionError("record is not an object");
  for (const char* key : {"prompt", "chosen", "rejected", "prompt_id"}) {
    if (!record.contains(key)) throw IngestionError(std::string("missing field '") + key + "'");
  }
  for (const auto& [key, value] : record.items()) {
    if (key != "prompt" && key != "chosen" && key != "rejected" && key != "worker" && key != "domain" &&
        key != "prompt_id") {
      throw IngestionError("unknown field '" + key + "'");
    }
  }
  RawPreferencePair p;
  p.x = vector_from_json(record["prompt"], "prompt");
  p.chosen = vector_from_json(record["chosen"], "chosen");
  p.rejected = vector_from_json(record["rejected"], "rejected");
  if (p.chosen.size() != p.rejected.size()) throw IngestionError("chosen and rejected differ in length");
  p.prompt_id = record["prompt_id"].get<std::string>();
  if (record.contains("worker") && !record["worker"].is_null()) p.worker = record["worker"].get<std::string>();
  if (record.contains("domain") && !record["domain"].is_null()) p.domain = record["domain"].get<std::string>();
  return p;
}

Json to_json(const RawPreferencePair& pair) {
  Json j;
  j["prompt"] = vector_to_json(pair.x);
  j["chosen"] = vector_to_json(pair.chosen);
  j["rejected"] = vector_to_json(pair.rejected);
  if (pair.worker) j["worker"] = *pair.worker;
  if (pair.domain) j["domain"] = *pair.domain;
  j["prompt_id"] = pair.prompt_id;
  return j;
}

std::vector<RawPreferencePair> read_preferences(const std::filesystem::path& path) {
  std::vector<RawPreferencePair> out;
  for_each_line(path, [&](const Json& j) {
    auto p = preference_from_json(j);
    if (!out.empty() && (p.x.size() != out.front().x.size() || p.chosen.size() != out.front().chosen.size())) {
      throw IngestionError("feature dimensions differ from the first record");
    }
    out.push_back(std::move(p));
  });
  if (out.empty()) throw IngestionError(path.string() + ": no records");
  return out;
}

void write_preferences(const std::filesystem::path& path, std::span<const RawPreferencePair> pairs) {
  std::vector<Json> records;
  for (const auto& p : pairs) records.push_back(to_json(p));
  write_text(path, jsonl(records));
}

namespace {

std::string label_model_name(LabelModel m) { return m == LabelModel::kDeterministic ? "deterministic" : "bradley-terry"; }

LabelModel label_model_from(const std::string& s, const std::string& field) {
  if (s == "deterministic") return LabelModel::kDeterministic;
  if (s == "bradley-terry") return LabelModel::kBradleyTerry;
  throw ConfigError(field + ": expected 'deterministic' or 'bradley-terry'");
}

SymmetrizeMode symmetrize_from(const std::string& s, const std::string& field) {
  if (s == "both") return SymmetrizeMode::kBoth;
  if (s == "sampled") return SymmetrizeMode::kSampled;
  throw ConfigError(field + ": expected 'both' or 'sampled'");
}

}  // namespace

SyntheticWorldSpec world_spec_from_json(const Json& j, const std::string& where, SyntheticWorldSpec base) {
  StrictObject o(j, where);
  SyntheticWorldSpec s = std::move(base);
  if (o.has("clients_per_cluster")) {
    o.read("clients_per_cluster", s.clients_per_cluster);
    s.num_clusters = static_cast<int>(s.clients_per_cluster.size());
  }
  o.read("num_clusters", s.num_clusters);
  o.read("prompt_dim", s.prompt_dim);
  o.read("completion_dim", s.completion_dim);
  o.read("vocab_size", s.vocab_size);
  o.read("pairs_per_client", s.pairs_per_client);
  o.read("separation", s.separation);
  if (o.has("label_model")) s.label_model = label_model_from(o.get<std::string>("label_model"), o.field("label_model"));
  o.read("bt_temperature", s.bt_temperature);
  o.read("label_noise", s.label_noise);
  o.read("val_fraction", s.val_fraction);
  if (o.has("symmetrize")) s.symmetrize = symmetrize_from(o.get<std::string>("symmetrize"), o.field("symmetrize"));
  o.read("seed", s.seed);
  o.finish();
  try {
    s.validate();
  } catch (const DegenerateSpecError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return s;
}

Json to_json(const SyntheticWorldSpec& s) {
  Json j;
  j["num_clusters"] = s.num_clusters;
  j["clients_per_cluster"] = s.clients_per_cluster;
  j["prompt_dim"] = s.prompt_dim;
  j["completion_dim"] = s.completion_dim;
  j["vocab_size"] = s.vocab_size;
  j["pairs_per_client"] = s.pairs_per_client;
  j["separation"] = s.separation;
  j["label_model"] = label_model_name(s.label_model);
  j["bt_temperature"] = s.bt_temperature;
  j["label_noise"] = s.label_noise;
  j["val_fraction"] = s.val_fraction;
  j["symmetrize"] = s.symmetrize == SymmetrizeMode::kBoth ? "both" : "sampled";
  j["seed"] = s.seed;
  return j;
}

Json world_to_json(const SyntheticWorld& world) {
  Json j;
  j["spec"] = to_json(world.spec);
  j["vocab"] = matrix_to_json(*world.vocab);
  j["reward_weights"] = matrix_to_json(world.oracle.weights());
  j["cluster_mass"] = vector_to_json(world.oracle.mass());
  j["latent"] = world.latent;
  return j;
}

SyntheticWorld world_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("spec")) throw IngestionError("world file has no 'spec'");
  SyntheticWorld world = generate_synthetic_world(world_spec_from_json(j["spec"], "spec"));
  if (j.contains("vocab") && matrix_from_json(j["vocab"], "vocab") != *world.vocab) {
    throw IngestionError("world file: vocab does not match its spec");
  }
  if (j.contains("reward_weights") &&
      matrix_from_json(j["reward_weights"], "reward_weights") != world.oracle.weights()) {
    throw IngestionError("world file: reward weights do not match its spec");
  }
  if (j.contains("latent") && j["latent"].get<std::vector<int>>() != world.latent) {
    throw IngestionError("world file: latent assignment does not match its spec");
  }
  return world;
}

Json partition_to_json(const Partition& partition, const std::string& scheme) {
  Json j;
  j["scheme"] = scheme;
  j["clients"] = partition;
  return j;
}

Partition partition_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("clients")) throw IngestionError("partition file has no 'clients'");
  return j["clients"].get<Partition>();
}

Json to_json(const GeneratedPreferenceRecord& r) {
  Json j;
  j["instruction"] = r.instruction;
  j["prompt"] = vector_to_json(r.x);
  j["y0"] = r.y0;
  j["y1"] = r.y1;
  j["votes"] = r.votes;
  j["label"] = r.label;
  return j;
}

GeneratedPreferenceRecord generated_record_from_json(const Json& j) {
  GeneratedPreferenceRecord r;
  r.instruction = j.at("instruction").get<std::size_t>();
  r.x = vector_from_json(j.at("prompt"), "prompt");
  r.y0 = j.at("y0").get<int>();
  r.y1 = j.at("y1").get<int>();
  r.votes = j.at("votes").get<std::vector<int>>();
  r.label = j.at("label").get<int>();
  if (r.label != 0 && r.label != 1) throw IngestionError("label must be 0 or 1");
  return r;
}

void write_generated(const std::filesystem::path& path, const GeneratedPreferenceDataset& dataset) {
  std::vector<Json> records;
  for (const auto& r : dataset) records.push_back(to_json(r));
  write_text(path, jsonl(records));
}

GeneratedPreferenceDataset read_generated(const std::filesystem::path& path) {
  GeneratedPreferenceDataset out;
  for_each_line(path, [&](const Json& j) { out.push_back(generated_record_from_json(j)); });
  return out;
}

Json to_json(const RoundLog& log) {
  Json j;
  j["round"] = log.round;
  j["phase"] = log.phase;
  j["selector"] = log.selector;
  j["sampled"] = log.sampled;
  j["routed"] = log.routed;
  Json losses = Json::array();
  for (double l : log.local_losses) losses.push_back(std::isfinite(l) ? Json(l) : Json(nullptr));
  j["local_losses"] = losses;
  j["checksum"] = to_hex(log.checksum);
  j["broadcast_bytes"] = log.broadcast_bytes;
  j["upload_bytes"] = log.upload_bytes;
  j["grouping_bytes"] = log.grouping_bytes;
  return j;
}

void write_round_logs(const std::filesystem::path& path, std::span<const RoundLog> logs) {
  std::vector<Json> records;
  for (const auto& l : logs) records.push_back(to_json(l));
  write_text(path, jsonl(records));
}

std::string round_logs_csv(std::span<const RoundLog> logs) {
  std::ostringstream out;
  out.precision(17);
  out << "round,phase,selector,sampled,mean_local_loss,checksum,broadcast_bytes,upload_bytes,grouping_bytes\n";
  for (const auto& l : logs) {
    double sum = 0.0;
    int n = 0;
    for (double v : l.local_losses) {
      if (std::isfinite(v)) {
        sum += v;
        ++n;
      }
    }
    std::string sampled;
    for (std::size_t i = 0; i < l.sampled.size(); ++i) sampled += (i ? " " : "") + std::to_string(l.sampled[i]);
    out << l.round << ',' << l.phase << ',' << l.selector << ',' << sampled << ',';
    if (n > 0) out << sum / n;
    out << ',' << to_hex(l.checksum) << ',' << l.broadcast_bytes << ',' << l.upload_bytes << ',' << l.grouping_bytes
        << '\n';
  }
  return out.str();
}

Json assignments_to_json(std::span<const AssignmentRecord> history) {
  Json out = Json::array();
  for (const auto& h : history) {
    Json j;
    j["round"] = h.round;
    j["phase_round"] = h.phase_round;
    j["selector_of"] = h.assignment.selector_of;
    j["members"] = h.assignment.members;
    j["loss_digest"] = h.loss_digest;
    out.push_back(std::move(j));
  }
  return out;
}

Json to_json(const EvalReport& report) {
  Json j;
  j["metric"] = report.metric;
  j["value"] = report.value;
  j["n"] = report.n;
  j["config_digest"] = report.config_digest;
  if (!report.series.empty()) {
    Json s = Json::array();
    for (auto [round, value] : report.series) s.push_back(Json::array({round, value}));
    j["series"] = s;
  }
  return j;
}

std::string series_csv(std::span<const EvalReport> reports) {
  std::ostringstream out;
  out.precision(17);
  out << "round,metric,value\n";
  for (const auto& r : reports) {
    for (auto [round, value] : r.series) out << round << ',' << r.metric << ',' << value << '\n';
  }
  return out.str();
}

}  // namespace fedrlhf
