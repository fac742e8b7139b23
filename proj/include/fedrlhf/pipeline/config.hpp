#pragma once

// Experiment configuration. JSON schema (every key except "algorithm" is
// optional; unknown keys are rejected):
//
//   algorithm      "fedbis" | "fedbiscuit" | "centralized"
//   preset         "summarization-like" | "qa-like"; applied before the other keys
//   seed, threads, output_dir
//   world          synthetic world spec (world.seed defaults to seed)     } exactly
//   data           {path, partition: "worker"|"dirichlet", clients,       } one
//                   alpha, val_fraction, symmetrize}                      }
//   selector       {hidden: [int...]}
//   fl             {clients_per_round, local_iters, rounds, batch_size, aggregation, optimizer}
//   biscuit        {num_selectors, warmup_rounds, regroup_period}
//   rlft           {enabled, instructions, n, reference_scale, dpo: {beta, steps, batch_size, optimizer}}
//   eval           {heldout_pairs_per_client, instructions, best_of_n, series_every, tournament}
//   optimizer      {kind: "sgd"|"adamw"|"rmsprop", lr, beta1, beta2, eps, weight_decay, rms_decay}
//
// fl.rounds is the total communication budget. For fedbiscuit the U * R_pre
// warm-up rounds come out of it.

#include "fedrlhf/biscuit/fedbiscuit.hpp"
#include "fedrlhf/data/io.hpp"
#include "fedrlhf/data/world.hpp"
#include "fedrlhf/eval/metrics.hpp"
#include "fedrlhf/rlft/rlft.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fedrlhf {

enum class Algorithm { kFedBis, kFedBiscuit, kCentralized };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& name);

struct DataSource {
  std::string path;
  std::string partition = "worker";  // or "dirichlet"
  int clients = 0;                   // dirichlet only
  double alpha = 0.3;
  double val_fraction = 0.1;
  SymmetrizeMode symmetrize = SymmetrizeMode::kBoth;
};

struct RlftSpec {
  bool enabled = true;
  int instructions = 200;
  int n = 4;
  double reference_scale = 0.5;
  DPOConfig dpo{0.1, 500, 32, {OptimizerKind::kRmsProp, 1e-2, 0.9, 0.95, 1e-8, 0.0, 0.99}, 0};
};

struct EvalSpec {
  int heldout_pairs_per_client = 20;
  int instructions = 200;
  int best_of_n = 8;
  int series_every = 0;  // rounds between series points; 0 disables the series
  Tournament tournament = Tournament::kKnockout;
};

struct ExperimentConfig {
  Algorithm algorithm = Algorithm::kFedBis;
  std::string preset;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string output_dir = "run";
  std::optional<SyntheticWorldSpec> world;
  std::optional<DataSource> data;
  std::vector<int> hidden{16};
  FLConfig fl{5, 30, 500, 16, {OptimizerKind::kAdamW, 1e-2}, AggregationRule::kScaled, 0, 1};
  int num_selectors = 3;
  int warmup_rounds = 50;
  int regroup_period = 50;
  RlftSpec rlft;
  EvalSpec eval;

  void validate() const;
  int num_clients() const;
};

ExperimentConfig preset_config(const std::string& name);
ExperimentConfig config_from_json(const Json& j);
Json to_json(const ExperimentConfig& config);
Json to_json(const OptimizerSpec& spec);

// Hash of the resolved config without the fields that must not change results
// (threads, output_dir).
std::string config_digest(const ExperimentConfig& config);

// Library configs with seeds derived from the root seed.
FLConfig fl_config(const ExperimentConfig& config);
BiscuitConfig biscuit_config(const ExperimentConfig& config);
DPOConfig dpo_config(const ExperimentConfig& config);

}  // namespace fedrlhf
