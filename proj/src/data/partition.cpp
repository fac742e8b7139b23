#include "fedrlhf/data/partition.hpp"

#include <algorithm>
#include <random>

namespace fedrlhf {

std::map<std::string, std::vector<std::size_t>> partition_by_worker(std::span<const RawPreferencePair> pairs) {
  std::map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!pairs[i].worker) throw IngestionError("record " + std::to_string(i) + " has no worker id");
    out[*pairs[i].worker].push_back(i);
  }
  return out;
}

Partition partition_dirichlet(std::span<const RawPreferencePair> pairs, int num_clients, double alpha, Rng& rng) {
  if (num_clients < 1) throw std::invalid_argument("partition_dirichlet: need at least one client");
  if (!(alpha > 0.0)) throw std::invalid_argument("partition_dirichlet: alpha must be positive");

  // domain -> prompt_id -> pair indices; std::map keeps iteration deterministic
  std::map<std::string, std::map<std::string, std::vector<std::size_t>>> domains;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!pairs[i].domain) throw IngestionError("record " + std::to_string(i) + " has no domain id");
    domains[*pairs[i].domain][pairs[i].prompt_id].push_back(i);
  }

  const auto m = static_cast<std::size_t>(num_clients);
  Partition partition(m);
  std::gamma_distribution<double> gamma(alpha, 1.0);
  for (auto& [domain, prompts] : domains) {
    std::vector<double> q(m);
    double sum = 0.0;
    for (auto& v : q) sum += (v = gamma(rng));
    if (!(sum > 0.0)) {
      std::fill(q.begin(), q.end(), 1.0);
      sum = static_cast<double>(m);
    }
    std::size_t n_domain = 0;
    std::vector<const std::vector<std::size_t>*> units;
    for (auto& [id, idx] : prompts) {
      units.push_back(&idx);
      n_domain += idx.size();
    }
    std::shuffle(units.begin(), units.end(), rng);

    std::vector<double> deficit(m);
    for (std::size_t c = 0; c < m; ++c) deficit[c] = q[c] / sum * static_cast<double>(n_domain);
    for (const auto* unit : units) {
      const auto c = static_cast<std::size_t>(std::max_element(deficit.begin(), deficit.end()) - deficit.begin());
      partition[c].insert(partition[c].end(), unit->begin(), unit->end());
      deficit[c] -= static_cast<double>(unit->size());
    }
  }
  for (auto& p : partition) std::sort(p.begin(), p.end());
  return partition;
}

std::vector<std::vector<RawPreferencePair>> materialize(std::span<const RawPreferencePair> pairs,
                                                        const Partition& partition) {
  std::vector<std::vector<RawPreferencePair>> out(partition.size());
  for (std::size_t c = 0; c < partition.size(); ++c) {
    for (auto i : partition[c]) out[c].push_back(pairs[i]);
  }
  return out;
}

Partition to_partition(const std::map<std::string, std::vector<std::size_t>>& by_worker) {
  Partition p;
  for (const auto& [worker, idx] : by_worker) p.push_back(idx);
  return p;
}

}  // namespace fedrlhf
