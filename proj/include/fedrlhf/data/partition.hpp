#pragma once

#include "fedrlhf/core/rng.hpp"
#include "fedrlhf/data/preference.hpp"

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace fedrlhf {

// Partitions are index sets into the input sequence; every partitioner returns
// a disjoint cover of [0, pairs.size()).
using Partition = std::vector<std::vector<std::size_t>>;

// One client per distinct worker id, ordered by worker id.
std::map<std::string, std::vector<std::size_t>> partition_by_worker(std::span<const RawPreferencePair> pairs);

// Per domain, draws client proportions q ~ Dirichlet(alpha) and hands out whole
// prompts (all pairs sharing a prompt_id) to the client with the largest
// remaining deficit q_c * n_domain - assigned_c. No prompt spans two clients.
Partition partition_dirichlet(std::span<const RawPreferencePair> pairs, int num_clients, double alpha, Rng& rng);

// Gathers the pairs named by each index set.
std::vector<std::vector<RawPreferencePair>> materialize(std::span<const RawPreferencePair> pairs,
                                                        const Partition& partition);

Partition to_partition(const std::map<std::string, std::vector<std::size_t>>& by_worker);

}  // namespace fedrlhf
