#pragma once

#include "fedrlhf/core/example.hpp"
#include "fedrlhf/core/rng.hpp"
#include "fedrlhf/core/types.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedrlhf {

struct RawPreferencePair {
  VectorXd x;
  VectorXd chosen;
  VectorXd rejected;
  std::optional<std::string> worker;
  std::optional<std::string> domain;
  std::string prompt_id;
};

enum class SymmetrizeMode { kBoth, kSampled };

struct SplitError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IngestionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ClientDataset {
  int id = 0;
  std::vector<SymmetrizedExample> train;
  std::vector<SymmetrizedExample> val;
  double weight = 0.0;  // p_m
  std::size_t num_pairs = 0;
};

struct TrainValSplit {
  std::vector<SymmetrizedExample> train;
  std::vector<SymmetrizedExample> val;
};

// mode=kBoth emits (x, chosen, rejected, 0) then (x, rejected, chosen, 1) for
// each pair; mode=kSampled emits one uniformly chosen ordering. `source` is the
// pair's index plus `source_offset`.
std::vector<SymmetrizedExample> symmetrize(std::span<const RawPreferencePair> pairs, SymmetrizeMode mode,
                                           Rng& rng, std::size_t source_offset = 0);

// Splits at pair granularity: both orderings of a source pair land on the same
// side. val gets round(val_fraction * pairs) pairs, at least one, and train must
// keep strictly more pairs than val.
TrainValSplit split_train_val(std::span<const SymmetrizedExample> examples, double val_fraction, Rng& rng);

// Smallest pair count split_train_val accepts at any val_fraction.
inline constexpr std::size_t kMinSplitPairs = 3;

// Symmetrizes and splits each client's pairs and assigns p_m = n_m / sum n.
// Client m draws from the stream "client/<m>" under `seed`. Clients with fewer
// than kMinSplitPairs pairs keep everything for training and get no validation
// set.
std::vector<ClientDataset> build_client_datasets(const std::vector<std::vector<RawPreferencePair>>& per_client,
                                                 SymmetrizeMode mode, double val_fraction, std::uint64_t seed);

// Single client holding the union of all clients' data (the centralized baseline).
ClientDataset pool_clients(std::span<const ClientDataset> clients);

}  // namespace fedrlhf
