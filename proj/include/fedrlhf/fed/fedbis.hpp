#pragma once

#include "fedrlhf/core/optimizer.hpp"
#include "fedrlhf/core/rng.hpp"
#include "fedrlhf/core/selector.hpp"
#include "fedrlhf/data/preference.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fedrlhf {

// How the server folds the sampled clients' selectors into the next global one.
enum class AggregationRule {
  kScaled,      // (M/A) sum_{m in A} p_m phi^m
  kNormalized,  // sum p_m phi^m / sum p_m over the sampled set
  kAnchored,    // (1 - sum p_m) phi + sum p_m phi^m
};

std::string to_string(AggregationRule rule);
AggregationRule aggregation_rule_from_string(const std::string& name);

struct FLConfig {
  int clients_per_round = 5;  // A
  int local_iters = 30;       // K
  int rounds = 500;           // R
  int batch_size = 16;
  OptimizerSpec optimizer;
  AggregationRule aggregation = AggregationRule::kScaled;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate(int num_clients) const;
};

struct LocalUpdate {
  int client = 0;
  ParamVector params;
};

struct LocalResult {
  ParamVector params;
  double final_loss = 0.0;  // mean CE over the client's full train set after training
};

struct RoundLog {
  int round = 0;           // global communication-round index (warm-up included)
  std::string phase;       // "fedbis", "warmup" or "clustered"
  int selector = 0;        // warm-up: selector being trained
  std::vector<int> sampled;
  std::vector<int> routed;  // selector each sampled client trained
  std::vector<double> local_losses;
  std::uint64_t checksum = 0;  // over the aggregated parameters
  // Bytes moved since the start of the run (per-round when returned by
  // fedbis_round, cumulative in run logs).
  std::uint64_t broadcast_bytes = 0;
  std::uint64_t upload_bytes = 0;
  std::uint64_t grouping_bytes = 0;
};

// Uniform size-A subset of [0, M) without replacement, returned sorted.
std::vector<int> sample_clients(int num_clients, int count, Rng& rng);

// K optimizer steps from `start` on batches drawn uniformly with replacement
// from the client's train set (the full set when it is smaller than a batch).
// Returns nullopt when the client has no training data.
std::optional<LocalResult> local_train(const Selector& start, const ClientDataset& client, int local_iters,
                                       int batch_size, const OptimizerSpec& optimizer, Rng& rng);

ParamVector aggregate_fedbis(std::span<const LocalUpdate> locals, std::span<const double> weights, int num_clients,
                             int sampled, AggregationRule rule = AggregationRule::kScaled,
                             const ParamVector* current = nullptr);

struct FedbisResult {
  Selector selector;
  std::vector<RoundLog> logs;
};

using SelectorRoundHook = std::function<void(int round, const Selector&)>;

// One FedBis round on `selector`: sample, train locally, aggregate. Randomness
// comes from the streams "round/<r>/sample" and "round/<r>/client/<m>".
RoundLog fedbis_round(const FLConfig& config, std::span<const ClientDataset> clients, Selector& selector, int round);

// Adds `prev`'s cumulative byte counters to `log`.
void accumulate_bytes(RoundLog& log, const RoundLog* prev);

FedbisResult run_fedbis(const FLConfig& config, std::span<const ClientDataset> clients, const Selector& initial,
                        const SelectorRoundHook& on_round = {});

inline std::uint64_t param_bytes(const ParamVector& p) {
  return static_cast<std::uint64_t>(p.size()) * sizeof(double);
}

}  // namespace fedrlhf
