#include "fedrlhf/data/io.hpp"
#include "fedrlhf/fed/checkpoint.hpp"
#include "fedrlhf/pipeline/config.hpp"

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

using namespace fedrlhf;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("fedrlhf_io_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_lines(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string error_of(const auto& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

bool bit_equal(const ParamVector& a, const ParamVector& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
}

const char* kRecord =
    R"({"prompt":[1,0.5],"chosen":[0.1,0.2],"rejected":[0.3,0.4],"worker":"a","domain":"news","prompt_id":"p1"})";

}  // namespace

TEST_CASE("selector checkpoints round trip bit-exactly") {
  TempDir dir("selector");
  Rng rng(3);
  auto s = init_selector(SelectorArch{3, 2, {5, 4}}, rng);
  s.params[0] = 1.0 / 3.0;
  s.params[1] = -0.0;
  s.params[2] = 5e-324;
  save_selector(dir.path / "s.bin", s, 17);
  int round = -5;
  const auto back = load_selector(dir.path / "s.bin", &round);
  CHECK(round == 17);
  CHECK(back.arch == s.arch);
  CHECK(bit_equal(back.params, s.params));
}

TEST_CASE("policy checkpoints round trip and check the vocabulary shape") {
  TempDir dir("policy");
  auto vocab = std::make_shared<const MatrixXd>(MatrixXd::Random(6, 3));
  Policy p(4, vocab, ParamVector::Random(Policy::param_count(4, *vocab)), 0.7);
  save_policy(dir.path / "p.bin", p);
  const auto back = load_policy(dir.path / "p.bin", vocab);
  CHECK(bit_equal(back.params, p.params));
  CHECK(back.temperature == 0.7);
  CHECK(back.prompt_dim == 4);
  auto other = std::make_shared<const MatrixXd>(MatrixXd::Random(5, 3));
  CHECK_THROWS_AS(load_policy(dir.path / "p.bin", other), CheckpointError);
}

TEST_CASE("corrupt checkpoints are rejected") {
  TempDir dir("corrupt");
  Rng rng(3);
  save_selector(dir.path / "s.bin", init_selector(SelectorArch{2, 2, {3}}, rng));
  const auto size = fs::file_size(dir.path / "s.bin");
  fs::resize_file(dir.path / "s.bin", size - 4);
  CHECK_THROWS_AS(load_selector(dir.path / "s.bin"), CheckpointError);
  fs::resize_file(dir.path / "s.bin", size + 8);
  CHECK_THROWS_AS(load_selector(dir.path / "s.bin"), CheckpointError);
  write_lines(dir.path / "junk.bin", "not a header\n");
  CHECK_THROWS_AS(load_selector(dir.path / "junk.bin"), CheckpointError);
  CHECK_THROWS_AS(load_selector(dir.path / "missing.bin"), CheckpointError);
}

TEST_CASE("preference records parse strictly") {
  const auto p = preference_from_json(Json::parse(kRecord));
  CHECK(p.x.size() == 2);
  CHECK(p.chosen[1] == 0.2);
  CHECK(*p.worker == "a");
  CHECK(*p.domain == "news");
  CHECK(p.prompt_id == "p1");
  CHECK(preference_from_json(to_json(p)).rejected == p.rejected);

  auto j = Json::parse(kRecord);
  j.erase("chosen");
  CHECK(error_of([&] { preference_from_json(j); }).find("chosen") != std::string::npos);
  j = Json::parse(kRecord);
  j["extra"] = 1;
  CHECK(error_of([&] { preference_from_json(j); }).find("extra") != std::string::npos);
  j = Json::parse(kRecord);
  j["rejected"] = Json::array({1});
  CHECK_THROWS_AS(preference_from_json(j), IngestionError);
}

TEST_CASE("jsonl ingestion reports the failing line") {
  TempDir dir("jsonl");
  write_lines(dir.path / "ok.jsonl", std::string(kRecord) + "\n\n" + kRecord + "\n");
  CHECK(read_preferences(dir.path / "ok.jsonl").size() == 2);

  write_lines(dir.path / "bad.jsonl", std::string(kRecord) + "\n{\"prompt\": [1]\n");
  const auto msg = error_of([&] { read_preferences(dir.path / "bad.jsonl"); });
  CHECK(msg.find(":2:") != std::string::npos);

  std::string other = kRecord;
  other.replace(other.find("[1,0.5]"), 7, "[1,0.5,2]");
  write_lines(dir.path / "dims.jsonl", std::string(kRecord) + "\n" + other + "\n");
  CHECK_THROWS_AS(read_preferences(dir.path / "dims.jsonl"), IngestionError);
  write_lines(dir.path / "empty.jsonl", "\n");
  CHECK_THROWS_AS(read_preferences(dir.path / "empty.jsonl"), IngestionError);
  CHECK_THROWS_AS(read_preferences(dir.path / "nope.jsonl"), IngestionError);

  std::vector<RawPreferencePair> pairs{preference_from_json(Json::parse(kRecord))};
  write_preferences(dir.path / "out.jsonl", pairs);
  CHECK(read_preferences(dir.path / "out.jsonl")[0].x == pairs[0].x);
}

TEST_CASE("world files regenerate and verify the world") {
  SyntheticWorldSpec spec;
  spec.pairs_per_client = 5;
  spec.seed = 4;
  const auto w = generate_synthetic_world(spec);
  const Json j = world_to_json(w);
  const auto back = world_from_json(j);
  CHECK(back.oracle.weights() == w.oracle.weights());
  CHECK(back.latent == w.latent);
  Json tampered = j;
  tampered["reward_weights"][0][0] = 42.0;
  CHECK_THROWS_AS(world_from_json(tampered), IngestionError);
  CHECK(world_spec_from_json(to_json(spec)).pairs_per_client == 5);
}

TEST_CASE("generated records and partitions round trip") {
  GeneratedPreferenceRecord r{3, VectorXd::LinSpaced(4, 0, 1), 5, 9, 1, {1, 0, 1}};
  const auto back = generated_record_from_json(to_json(r));
  CHECK(back.instruction == 3);
  CHECK(back.x == r.x);
  CHECK(back.y1 == 9);
  CHECK(back.votes == r.votes);
  const Partition p{{0, 3}, {1, 2, 4}};
  CHECK(partition_from_json(partition_to_json(p, "dirichlet")) == p);
}

TEST_CASE("round logs render as csv") {
  RoundLog log;
  log.round = 2;
  log.phase = "clustered";
  log.sampled = {1, 4};
  log.local_losses = {0.5, 1.5};
  log.checksum = 255;
  log.broadcast_bytes = 10;
  const std::vector<RoundLog> logs{log};
  const auto csv = round_logs_csv(logs);
  CHECK(csv.rfind("round,phase,selector,sampled,mean_local_loss,checksum,broadcast_bytes,upload_bytes,grouping_bytes\n",
                  0) == 0);
  CHECK(csv.find("2,clustered,0,1 4,1,00000000000000ff,10,0,0") != std::string::npos);
}

TEST_CASE("config rejects missing, unknown and mistyped fields by name") {
  CHECK(error_of([] { config_from_json(Json::parse(R"({"seed": 1})")); }).find("algorithm") != std::string::npos);
  const auto unknown = error_of([] {
    config_from_json(Json::parse(R"({"algorithm": "fedbis", "world": {}, "fl": {"roundz": 3}})"));
  });
  CHECK(unknown.find("fl.roundz") != std::string::npos);
  const auto typed = error_of([] {
    config_from_json(Json::parse(R"({"algorithm": "fedbis", "world": {}, "fl": {"rounds": "many"}})"));
  });
  CHECK(typed.find("fl.rounds") != std::string::npos);
  CHECK_THROWS_AS(config_from_json(Json::parse(R"({"algorithm": "sgd", "world": {}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(Json::parse(R"({"algorithm": "fedbis"})")), ConfigError);
  CHECK_THROWS_AS(
      config_from_json(Json::parse(R"({"algorithm": "fedbis", "world": {}, "data": {"path": "x.jsonl"}})")),
      ConfigError);
  CHECK_THROWS_AS(
      config_from_json(Json::parse(R"({"algorithm": "fedbiscuit", "world": {}, "fl": {"rounds": 100}})")),
      ConfigError);
}

TEST_CASE("config resolves presets, defaults and derived seeds") {
  const auto c = config_from_json(Json::parse(R"({"algorithm": "fedbis", "preset": "qa-like", "seed": 7})"));
  CHECK(c.world->clients_per_cluster == std::vector<int>{100, 100, 100});
  CHECK(c.world->seed == 7);
  CHECK(c.fl.clients_per_round == 10);
  const auto resolved = config_from_json(to_json(c));
  CHECK(config_digest(resolved) == config_digest(c));
  auto threaded = c;
  threaded.threads = 8;
  threaded.output_dir = "elsewhere";
  CHECK(config_digest(threaded) == config_digest(c));
  auto reseeded = c;
  reseeded.seed = 8;
  CHECK(config_digest(reseeded) != config_digest(c));

  const auto b = preset_config("summarization-like");
  CHECK(biscuit_config(b).fl.rounds == b.fl.rounds - b.num_selectors * b.warmup_rounds);
  CHECK(biscuit_config(b).total_rounds() == b.fl.rounds);
  auto central = b;
  central.algorithm = Algorithm::kCentralized;
  CHECK(fl_config(central).clients_per_round == 1);
  CHECK(fl_config(b).seed == derive_seed(b.seed, "fl"));
  CHECK_THROWS_AS(preset_config("chat-like"), ConfigError);
}
