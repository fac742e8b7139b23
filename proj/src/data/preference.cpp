#include "fedrlhf/data/preference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace fedrlhf {

std::vector<SymmetrizedExample> symmetrize(std::span<const RawPreferencePair> pairs, SymmetrizeMode mode,
                                           Rng& rng, std::size_t source_offset) {
  std::vector<SymmetrizedExample> out;
  out.reserve(mode == SymmetrizeMode::kBoth ? 2 * pairs.size() : pairs.size());
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (p.chosen.size() != p.rejected.size()) {
      throw ShapeError("symmetrize: chosen/rejected dimension mismatch at pair " + std::to_string(i));
    }
    const std::size_t src = source_offset + i;
    if (mode == SymmetrizeMode::kBoth) {
      out.push_back({p.x, p.chosen, p.rejected, 0, src});
      out.push_back({p.x, p.rejected, p.chosen, 1, src});
    } else if (coin(rng)) {
      out.push_back({p.x, p.rejected, p.chosen, 1, src});
    } else {
      out.push_back({p.x, p.chosen, p.rejected, 0, src});
    }
  }
  return out;
}

TrainValSplit split_train_val(std::span<const SymmetrizedExample> examples, double val_fraction, Rng& rng) {
  if (!(val_fraction > 0.0 && val_fraction < 0.5)) throw SplitError("val_fraction must lie in (0, 0.5)");
  std::vector<std::size_t> sources;
  for (const auto& e : examples) sources.push_back(e.source);
  std::sort(sources.begin(), sources.end());
  sources.erase(std::unique(sources.begin(), sources.end()), sources.end());

  const auto n = static_cast<long long>(sources.size());
  const long long n_val = std::max<long long>(1, std::llround(val_fraction * static_cast<double>(n)));
  if (n - n_val <= n_val) {
    throw SplitError("split_train_val: " + std::to_string(n) +
                     " source pairs are too few for a train set strictly larger than the validation set");
  }
  std::shuffle(sources.begin(), sources.end(), rng);
  std::vector<std::size_t> val_sources(sources.begin(), sources.begin() + n_val);
  std::sort(val_sources.begin(), val_sources.end());

  TrainValSplit split;
  for (const auto& e : examples) {
    const bool in_val = std::binary_search(val_sources.begin(), val_sources.end(), e.source);
    (in_val ? split.val : split.train).push_back(e);
  }
  return split;
}

std::vector<ClientDataset> build_client_datasets(const std::vector<std::vector<RawPreferencePair>>& per_client,
                                                 SymmetrizeMode mode, double val_fraction, std::uint64_t seed) {
  std::vector<ClientDataset> clients(per_client.size());
  std::size_t total = 0;
  for (std::size_t m = 0; m < per_client.size(); ++m) {
    auto rng = make_stream(seed, "client/" + std::to_string(m));
    auto examples = symmetrize(per_client[m], mode, rng);
    clients[m].id = static_cast<int>(m);
    if (per_client[m].size() < kMinSplitPairs) {
      // too small to hold out anything: train on all of it, no validation set
      clients[m].train = std::move(examples);
    } else {
      auto split = split_train_val(examples, val_fraction, rng);
      clients[m].train = std::move(split.train);
      clients[m].val = std::move(split.val);
    }
    clients[m].num_pairs = per_client[m].size();
    total += per_client[m].size();
  }
  if (total == 0) throw SplitError("build_client_datasets: no pairs at all");
  for (auto& c : clients) c.weight = static_cast<double>(c.num_pairs) / static_cast<double>(total);
  return clients;
}

ClientDataset pool_clients(std::span<const ClientDataset> clients) {
  ClientDataset pooled;
  pooled.id = 0;
  pooled.weight = 1.0;
  // Keep source ids unique across clients.
  std::size_t offset = 0;
  for (const auto& c : clients) {
    std::size_t max_src = 0;
    for (auto part : {&c.train, &c.val}) {
      for (auto e : *part) {
        max_src = std::max(max_src, e.source + 1);
        e.source += offset;
        (part == &c.train ? pooled.train : pooled.val).push_back(std::move(e));
      }
    }
    offset += max_src;
    pooled.num_pairs += c.num_pairs;
  }
  return pooled;
}

}  // namespace fedrlhf
