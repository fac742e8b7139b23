#include "fedrlhf/fed/fedbis.hpp"

#include "fedrlhf/core/parallel.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

namespace fedrlhf {

std::string to_string(AggregationRule rule) {
  switch (rule) {
    case AggregationRule::kScaled: return "scaled";
    case AggregationRule::kNormalized: return "normalized";
    case AggregationRule::kAnchored: return "anchored";
  }
  return "?";
}

AggregationRule aggregation_rule_from_string(const std::string& name) {
  if (name == "scaled") return AggregationRule::kScaled;
  if (name == "normalized") return AggregationRule::kNormalized;
  if (name == "anchored") return AggregationRule::kAnchored;
  throw std::invalid_argument("unknown aggregation rule '" + name + "'");
}

void FLConfig::validate(int num_clients) const {
  if (clients_per_round < 1 || clients_per_round > num_clients) {
    throw std::invalid_argument("clients_per_round must lie in [1, " + std::to_string(num_clients) + "]");
  }
  if (local_iters < 1) throw std::invalid_argument("local_iters must be >= 1");
  if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  optimizer.validate();
}

std::vector<int> sample_clients(int num_clients, int count, Rng& rng) {
  if (count < 0 || count > num_clients) {
    throw std::invalid_argument("sample_clients: cannot sample " + std::to_string(count) + " of " +
                                std::to_string(num_clients) + " clients");
  }
  std::vector<int> ids(static_cast<std::size_t>(num_clients));
  std::iota(ids.begin(), ids.end(), 0);
  // partial Fisher-Yates
  for (int i = 0; i < count; ++i) {
    std::uniform_int_distribution<int> pick(i, num_clients - 1);
    std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(pick(rng))]);
  }
  ids.resize(static_cast<std::size_t>(count));
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::optional<LocalResult> local_train(const Selector& start, const ClientDataset& client, int local_iters,
                                       int batch_size, const OptimizerSpec& optimizer, Rng& rng) {
  if (client.train.empty()) return std::nullopt;
  if (local_iters < 1) throw std::invalid_argument("local_train: local_iters must be >= 1");
  Selector model = start;
  OptimizerState state(optimizer, model.params.size());
  const auto n = client.train.size();
  const bool full_batch = n <= static_cast<std::size_t>(batch_size);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<SymmetrizedExample> batch;
  for (int k = 0; k < local_iters; ++k) {
    ParamVector grad;
    if (full_batch) {
      grad = selector_grad(model, client.train);
    } else {
      batch.clear();
      for (int b = 0; b < batch_size; ++b) batch.push_back(client.train[pick(rng)]);
      grad = selector_grad(model, batch);
    }
    optimizer_step(state, model.params, grad);
  }
  const double final_loss = selector_ce_loss(model, std::span(client.train));
  return LocalResult{std::move(model.params), final_loss};
}

ParamVector aggregate_fedbis(std::span<const LocalUpdate> locals, std::span<const double> weights, int num_clients,
                             int sampled, AggregationRule rule, const ParamVector* current) {
  if (rule == AggregationRule::kAnchored) {
    if (current == nullptr) throw std::invalid_argument("anchored aggregation needs the current parameters");
    if (locals.empty()) return *current;
  }
  if (locals.empty()) throw EmptyBatchError("aggregate: no local updates");

  std::vector<std::size_t> order(locals.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return locals[a].client < locals[b].client; });

  const auto dim = locals[order.front()].params.size();
  if (current) require_dim(current->size(), dim, "aggregate: current params");
  ParamVector acc = ParamVector::Zero(dim);
  double weight_sum = 0.0;
  for (auto i : order) {
    const auto& u = locals[i];
    require_dim(u.params.size(), dim, "aggregate: client " + std::to_string(u.client) + " params");
    if (u.client < 0 || static_cast<std::size_t>(u.client) >= weights.size()) {
      throw IndexError("aggregate: no weight for client " + std::to_string(u.client));
    }
    const double p = weights[static_cast<std::size_t>(u.client)];
    acc += p * u.params;
    weight_sum += p;
  }
  switch (rule) {
    case AggregationRule::kScaled:
      return (static_cast<double>(num_clients) / static_cast<double>(sampled)) * acc;
    case AggregationRule::kNormalized:
      return acc / weight_sum;
    case AggregationRule::kAnchored:
      return (1.0 - weight_sum) * *current + acc;
  }
  return acc;
}

void accumulate_bytes(RoundLog& log, const RoundLog* prev) {
  if (!prev) return;
  log.broadcast_bytes += prev->broadcast_bytes;
  log.upload_bytes += prev->upload_bytes;
  log.grouping_bytes += prev->grouping_bytes;
}

namespace {

std::vector<double> client_weights(std::span<const ClientDataset> clients) {
  std::vector<double> w(clients.size());
  for (std::size_t m = 0; m < clients.size(); ++m) {
    if (clients[m].id != static_cast<int>(m)) throw std::invalid_argument("clients must be indexed by id");
    w[m] = clients[m].weight;
  }
  return w;
}

}  // namespace

RoundLog fedbis_round(const FLConfig& config, std::span<const ClientDataset> clients, Selector& selector, int round) {
  const int num_clients = static_cast<int>(clients.size());
  const std::string base = "round/" + std::to_string(round);
  auto sample_rng = make_stream(config.seed, base + "/sample");
  RoundLog log;
  log.round = round;
  log.phase = "fedbis";
  log.sampled = sample_clients(num_clients, config.clients_per_round, sample_rng);

  std::vector<std::optional<LocalResult>> results(log.sampled.size());
  parallel_for(log.sampled.size(), config.threads, [&](std::size_t i) {
    const int m = log.sampled[i];
    auto rng = make_stream(config.seed, base + "/client/" + std::to_string(m));
    results[i] = local_train(selector, clients[static_cast<std::size_t>(m)], config.local_iters, config.batch_size,
                             config.optimizer, rng);
  });

  std::vector<LocalUpdate> locals;
  for (std::size_t i = 0; i < results.size(); ++i) {
    log.routed.push_back(0);
    if (!results[i]) {
      log.local_losses.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    log.local_losses.push_back(results[i]->final_loss);
    locals.push_back({log.sampled[i], std::move(results[i]->params)});
  }
  const auto c = param_bytes(selector.params);
  log.broadcast_bytes = c * log.sampled.size();
  log.upload_bytes = c * locals.size();
  if (!locals.empty() || config.aggregation == AggregationRule::kAnchored) {
    const auto weights = client_weights(clients);
    selector.params = aggregate_fedbis(locals, weights, num_clients, config.clients_per_round, config.aggregation,
                                       &selector.params);
  }
  log.checksum = checksum(selector.params);
  return log;
}

FedbisResult run_fedbis(const FLConfig& config, std::span<const ClientDataset> clients, const Selector& initial,
                        const SelectorRoundHook& on_round) {
  if (clients.empty()) throw std::invalid_argument("run_fedbis: no clients");
  config.validate(static_cast<int>(clients.size()));
  FedbisResult result{initial, {}};
  result.logs.reserve(static_cast<std::size_t>(config.rounds));
  for (int r = 0; r < config.rounds; ++r) {
    auto log = fedbis_round(config, clients, result.selector, r);
    accumulate_bytes(log, result.logs.empty() ? nullptr : &result.logs.back());
    result.logs.push_back(std::move(log));
    if (on_round) on_round(r, result.selector);
  }
  return result;
}

}  // namespace fedrlhf
