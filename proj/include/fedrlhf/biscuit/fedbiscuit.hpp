#pragma once

#include "fedrlhf/biscuit/grouping.hpp"
#include "fedrlhf/fed/fedbis.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace fedrlhf {

struct BiscuitConfig {
  FLConfig fl;  // fl.rounds counts the clustered phase only
  int num_selectors = 3;   // U
  int warmup_rounds = 50;  // R_pre, per selector
  int regroup_period = 50; // tau

  void validate(int num_clients) const;
  int total_rounds() const { return num_selectors * warmup_rounds + fl.rounds; }
};

struct AssignmentRecord {
  int round = 0;        // global round at which the grouping ran
  int phase_round = 0;  // clustered-phase round
  ClusterAssignment assignment;
  MatrixXd losses;
  std::string loss_digest;
};

struct WarmupResult {
  std::vector<Selector> selectors;
  std::vector<RoundLog> logs;
};

struct BiscuitResult {
  std::vector<Selector> selectors;
  std::vector<RoundLog> logs;
  std::vector<AssignmentRecord> history;
};

using EnsembleRoundHook = std::function<void(int global_round, std::span<const Selector>)>;

// Seed of selector u's warm-up: derive_seed(fl.seed, "warmup/<u>").
std::uint64_t warmup_seed(std::uint64_t seed, int selector);

// Trains selectors 0..U-1 one after the other, each for R_pre FedBis rounds
// from the same initial parameters.
WarmupResult warmup(const BiscuitConfig& config, std::span<const ClientDataset> clients, const Selector& initial,
                    const EnsembleRoundHook& on_round = {});

// (1 - sum_{m in A_u} p_m) phi_u + sum_{m in A_u} p_m phi_u^m. Returns `current`
// unchanged when no client trained this selector.
ParamVector aggregate_clusterwise(const ParamVector& current, std::span<const LocalUpdate> locals,
                                  std::span<const double> weights);

// Warm-up followed by fl.rounds clustered rounds. Grouping runs before
// clustered rounds r with tau | r, including r = 0.
BiscuitResult run_fedbiscuit(const BiscuitConfig& config, std::span<const ClientDataset> clients,
                             const Selector& initial, const EnsembleRoundHook& on_round = {});

std::string digest_hex(const MatrixXd& m);

}  // namespace fedrlhf
