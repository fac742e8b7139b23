#include "fedrlhf/fed/checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <fstream>
#include <string>

namespace fedrlhf {

namespace {

using Json = nlohmann::ordered_json;

constexpr const char* kFormat = "fedrlhf-params/1";

static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");

void write_checkpoint(const std::filesystem::path& path, Json header, const ParamVector& params) {
  header["dim"] = params.size();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out << header.dump() << '\n';
    out.write(reinterpret_cast<const char*>(params.data()),
              static_cast<std::streamsize>(params.size() * static_cast<Eigen::Index>(sizeof(double))));
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::pair<Json, ParamVector> read_checkpoint(const std::filesystem::path& path, const std::string& kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw CheckpointError(path.string() + ": missing header");
  Json header;
  try {
    header = Json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": bad header: " + e.what());
  }
  if (header.value("format", "") != kFormat) throw CheckpointError(path.string() + ": unknown format");
  if (header.value("kind", "") != kind) {
    throw CheckpointError(path.string() + ": expected a " + kind + " checkpoint, found " + header.value("kind", "?"));
  }
  const auto dim = header.at("dim").get<Eigen::Index>();
  if (dim < 0) throw CheckpointError(path.string() + ": negative dim");
  ParamVector params(dim);
  in.read(reinterpret_cast<char*>(params.data()), static_cast<std::streamsize>(dim * static_cast<Eigen::Index>(sizeof(double))));
  if (in.gcount() != static_cast<std::streamsize>(dim * static_cast<Eigen::Index>(sizeof(double)))) {
    throw CheckpointError(path.string() + ": truncated parameter block");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError(path.string() + ": trailing bytes");
  return {std::move(header), std::move(params)};
}

}  // namespace

void save_selector(const std::filesystem::path& path, const Selector& selector, int round) {
  Json header;
  header["format"] = kFormat;
  header["kind"] = "selector";
  header["round"] = round;
  header["arch"] = {{"prompt_dim", selector.arch.prompt_dim},
                    {"completion_dim", selector.arch.completion_dim},
                    {"hidden", selector.arch.hidden}};
  write_checkpoint(path, std::move(header), selector.params);
}

Selector load_selector(const std::filesystem::path& path, int* round) {
  auto [header, params] = read_checkpoint(path, "selector");
  const auto& a = header.at("arch");
  SelectorArch arch{a.at("prompt_dim").get<int>(), a.at("completion_dim").get<int>(),
                    a.at("hidden").get<std::vector<int>>()};
  arch.validate();
  if (params.size() != arch.param_count()) throw CheckpointError(path.string() + ": dim does not match arch");
  if (round) *round = header.value("round", -1);
  return Selector{arch, std::move(params)};
}

void save_policy(const std::filesystem::path& path, const Policy& policy, int round) {
  Json header;
  header["format"] = kFormat;
  header["kind"] = "policy";
  header["round"] = round;
  header["arch"] = {{"prompt_dim", policy.prompt_dim},
                    {"vocab_size", policy.vocab->rows()},
                    {"completion_dim", policy.vocab->cols()},
                    {"temperature", policy.temperature}};
  write_checkpoint(path, std::move(header), policy.params);
}

Policy load_policy(const std::filesystem::path& path, std::shared_ptr<const MatrixXd> vocab, int* round) {
  auto [header, params] = read_checkpoint(path, "policy");
  const auto& a = header.at("arch");
  if (!vocab || a.at("vocab_size").get<Eigen::Index>() != vocab->rows() ||
      a.at("completion_dim").get<Eigen::Index>() != vocab->cols()) {
    throw CheckpointError(path.string() + ": vocabulary shape does not match the checkpoint");
  }
  if (round) *round = header.value("round", -1);
  return Policy(a.at("prompt_dim").get<int>(), std::move(vocab), std::move(params), a.at("temperature").get<double>());
}

}  // namespace fedrlhf
