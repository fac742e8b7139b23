#include "fedrlhf/biscuit/fedbiscuit.hpp"

#include "fedrlhf/core/parallel.hpp"

#include <cstdio>
#include <limits>
#include <optional>

namespace fedrlhf {

void BiscuitConfig::validate(int num_clients) const {
  fl.validate(num_clients);
  if (num_selectors < 1) throw std::invalid_argument("num_selectors must be >= 1");
  if (warmup_rounds < 0) throw std::invalid_argument("warmup_rounds must be >= 0");
  if (regroup_period < 1) throw std::invalid_argument("regroup_period must be >= 1");
  if (num_clients < num_selectors) {
    throw InfeasibleBalanceError("fedbiscuit: fewer clients than selectors");
  }
}

std::uint64_t warmup_seed(std::uint64_t seed, int selector) {
  return derive_seed(seed, "warmup/" + std::to_string(selector));
}

WarmupResult warmup(const BiscuitConfig& config, std::span<const ClientDataset> clients, const Selector& initial,
                    const EnsembleRoundHook& on_round) {
  WarmupResult result;
  result.selectors.assign(static_cast<std::size_t>(config.num_selectors), initial);
  for (int u = 0; u < config.num_selectors; ++u) {
    FLConfig fl = config.fl;
    fl.seed = warmup_seed(config.fl.seed, u);
    for (int r = 0; r < config.warmup_rounds; ++r) {
      auto log = fedbis_round(fl, clients, result.selectors[static_cast<std::size_t>(u)], r);
      log.phase = "warmup";
      log.selector = u;
      log.round = u * config.warmup_rounds + r;
      std::fill(log.routed.begin(), log.routed.end(), u);
      accumulate_bytes(log, result.logs.empty() ? nullptr : &result.logs.back());
      result.logs.push_back(std::move(log));
      if (on_round) on_round(result.logs.back().round, result.selectors);
    }
  }
  return result;
}

ParamVector aggregate_clusterwise(const ParamVector& current, std::span<const LocalUpdate> locals,
                                  std::span<const double> weights) {
  return aggregate_fedbis(locals, weights, 0, 0, AggregationRule::kAnchored, &current);
}

std::string digest_hex(const MatrixXd& m) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double))));
  return buf;
}

namespace {

std::uint64_t ensemble_checksum(std::span<const Selector> selectors) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& s : selectors) {
    h = fnv1a(s.params.data(), static_cast<std::size_t>(s.params.size()) * sizeof(double), h);
  }
  return h;
}

}  // namespace

BiscuitResult run_fedbiscuit(const BiscuitConfig& config, std::span<const ClientDataset> clients,
                             const Selector& initial, const EnsembleRoundHook& on_round) {
  const int num_clients = static_cast<int>(clients.size());
  config.validate(num_clients);
  const auto& fl = config.fl;
  const int num_selectors = config.num_selectors;

  auto warm = warmup(config, clients, initial, on_round);
  BiscuitResult result;
  result.selectors = std::move(warm.selectors);
  result.logs = std::move(warm.logs);

  std::vector<double> weights(clients.size());
  for (std::size_t m = 0; m < clients.size(); ++m) weights[m] = clients[m].weight;
  const std::uint64_t c = param_bytes(initial.params);
  const int offset = num_selectors * config.warmup_rounds;
  ClusterAssignment assignment;

  for (int r = 0; r < fl.rounds; ++r) {
    const int global = offset + r;
    RoundLog log;
    log.round = global;
    log.phase = "clustered";

    if (r % config.regroup_period == 0) {
      AssignmentRecord rec;
      rec.round = global;
      rec.phase_round = r;
      rec.losses = compute_validation_losses(result.selectors, clients, fl.threads);
      rec.assignment = greedy_cluster_balanced(rec.losses, num_selectors);
      validate_assignment(rec.assignment, num_clients, num_selectors);
      rec.loss_digest = digest_hex(rec.losses);
      assignment = rec.assignment;
      result.history.push_back(std::move(rec));
      log.grouping_bytes = static_cast<std::uint64_t>(num_clients) * num_selectors * c;
    }

    const std::string base = "round/" + std::to_string(r);
    auto sample_rng = make_stream(fl.seed, base + "/sample");
    log.sampled = sample_clients(num_clients, fl.clients_per_round, sample_rng);
    for (int m : log.sampled) log.routed.push_back(assignment.selector_of[static_cast<std::size_t>(m)]);

    std::vector<std::optional<LocalResult>> results(log.sampled.size());
    parallel_for(log.sampled.size(), fl.threads, [&](std::size_t i) {
      const int m = log.sampled[i];
      auto rng = make_stream(fl.seed, base + "/client/" + std::to_string(m));
      results[i] = local_train(result.selectors[static_cast<std::size_t>(log.routed[i])],
                               clients[static_cast<std::size_t>(m)], fl.local_iters, fl.batch_size, fl.optimizer, rng);
    });

    std::vector<std::vector<LocalUpdate>> per_selector(static_cast<std::size_t>(num_selectors));
    std::size_t uploads = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
      if (!results[i]) {
        log.local_losses.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      log.local_losses.push_back(results[i]->final_loss);
      per_selector[static_cast<std::size_t>(log.routed[i])].push_back({log.sampled[i], std::move(results[i]->params)});
      ++uploads;
    }
    for (int u = 0; u < num_selectors; ++u) {
      auto& sel = result.selectors[static_cast<std::size_t>(u)];
      const auto& locals = per_selector[static_cast<std::size_t>(u)];
      if (!locals.empty()) sel.params = aggregate_clusterwise(sel.params, locals, weights);
    }
    log.broadcast_bytes = c * log.sampled.size();
    log.upload_bytes = c * uploads;
    log.checksum = ensemble_checksum(result.selectors);
    accumulate_bytes(log, result.logs.empty() ? nullptr : &result.logs.back());
    result.logs.push_back(std::move(log));
    if (on_round) on_round(global, result.selectors);
  }
  return result;
}

}  // namespace fedrlhf
