#include "fedrlhf/data/world.hpp"
#include "fedrlhf/eval/metrics.hpp"
#include "fedrlhf/fed/fedbis.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

using namespace fedrlhf;

namespace {

SyntheticWorld small_world(int clients = 6, int pairs = 20, std::uint64_t seed = 1) {
  SyntheticWorldSpec spec;
  spec.num_clusters = 1;
  spec.clients_per_cluster = {clients};
  spec.pairs_per_client = pairs;
  spec.seed = seed;
  return generate_synthetic_world(spec);
}

Selector initial(const SyntheticWorld& w, std::vector<int> hidden = {4}) {
  auto rng = make_stream(w.spec.seed, "init");
  return init_selector(SelectorArch{w.spec.prompt_dim, w.spec.completion_dim, std::move(hidden)}, rng);
}

FLConfig small_fl(int a, int rounds) {
  FLConfig fc;
  fc.clients_per_round = a;
  fc.local_iters = 3;
  fc.rounds = rounds;
  fc.batch_size = 8;
  fc.optimizer = {OptimizerKind::kSgd, 0.05};
  fc.seed = 9;
  return fc;
}

// Every size-a subset of [0, m) in lexicographic order.
std::vector<std::vector<int>> subsets(int m, int a) {
  std::vector<std::vector<int>> out;
  std::vector<bool> mask(static_cast<std::size_t>(m), false);
  std::fill(mask.begin(), mask.begin() + a, true);
  do {
    std::vector<int> s;
    for (int i = 0; i < m; ++i) {
      if (mask[static_cast<std::size_t>(i)]) s.push_back(i);
    }
    out.push_back(s);
  } while (std::prev_permutation(mask.begin(), mask.end()));
  return out;
}

}  // namespace

TEST_CASE("sampling all clients returns every id") {
  Rng rng(1);
  CHECK(sample_clients(5, 5, rng) == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(sample_clients(5, 0, rng).empty());
  CHECK_THROWS(sample_clients(5, 6, rng));
}

TEST_CASE("single-client sampling is uniform") {
  Rng rng(2);
  std::vector<int> counts(8, 0);
  for (int t = 0; t < 10000; ++t) ++counts[static_cast<std::size_t>(sample_clients(8, 1, rng)[0])];
  // chi-square with 7 degrees of freedom; 24.3 is the 0.999 quantile
  double chi2 = 0;
  for (int c : counts) chi2 += (c - 1250.0) * (c - 1250.0) / 1250.0;
  CHECK(chi2 < 24.3);
}

TEST_CASE("subset sampling is uniform over subsets") {
  Rng rng(3);
  std::map<std::vector<int>, int> counts;
  for (int t = 0; t < 20000; ++t) {
    const auto s = sample_clients(5, 2, rng);
    CHECK(std::is_sorted(s.begin(), s.end()));
    CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
    ++counts[s];
  }
  CHECK(counts.size() == 10);
  for (const auto& [s, c] : counts) CHECK(c == doctest::Approx(2000).epsilon(0.1));
}

TEST_CASE("one full-batch sgd step matches the closed form") {
  const auto w = small_world(1, 4);
  const auto start = initial(w);
  const auto& client = w.clients[0];
  Rng rng(0);
  const auto result = local_train(start, client, 1, 1000, {OptimizerKind::kSgd, 0.1}, rng);
  REQUIRE(result);
  const ParamVector expected = start.params - 0.1 * selector_grad(start, client.train);
  CHECK(result->params.isApprox(expected, 1e-14));
  const Selector trained(start.arch, result->params);
  CHECK(result->final_loss == doctest::Approx(selector_ce_loss(trained, std::span(client.train))));
}

TEST_CASE("zero learning rate leaves the local model unchanged") {
  const auto w = small_world(1, 20);
  const auto start = initial(w);
  Rng rng(0);
  const auto result = local_train(start, w.clients[0], 10, 4, {OptimizerKind::kAdamW, 0.0}, rng);
  REQUIRE(result);
  CHECK(result->params == start.params);
}

TEST_CASE("local training skips clients without data") {
  const auto w = small_world(1, 4);
  ClientDataset empty;
  Rng rng(0);
  CHECK_FALSE(local_train(initial(w), empty, 3, 4, {}, rng).has_value());
}

TEST_CASE("scaled aggregation of identical updates with equal weights is the identity") {
  const ParamVector phi = (ParamVector(3) << 0.1, -0.7, 3.3).finished();
  const std::vector<double> p(4, 0.25);
  std::vector<LocalUpdate> all{{0, phi}, {1, phi}, {2, phi}, {3, phi}};
  CHECK(aggregate_fedbis(all, p, 4, 4).isApprox(phi, 1e-15));
  std::vector<LocalUpdate> half{{1, phi}, {3, phi}};
  CHECK(aggregate_fedbis(half, p, 4, 2).isApprox(phi, 1e-15));
}

TEST_CASE("aggregation does not depend on arrival order") {
  Rng rng(4);
  std::normal_distribution<double> normal;
  std::vector<LocalUpdate> locals;
  for (int m : {5, 0, 3, 2}) locals.push_back({m, ParamVector::NullaryExpr(6, [&] { return normal(rng); })});
  const std::vector<double> p{0.1, 0.2, 0.05, 0.3, 0.15, 0.2};
  const ParamVector current = ParamVector::NullaryExpr(6, [&] { return normal(rng); });
  for (auto rule : {AggregationRule::kScaled, AggregationRule::kNormalized, AggregationRule::kAnchored}) {
    const ParamVector base = aggregate_fedbis(locals, p, 6, 4, rule, &current);
    auto shuffled = locals;
    std::reverse(shuffled.begin(), shuffled.end());
    std::swap(shuffled[0], shuffled[2]);
    CHECK(aggregate_fedbis(shuffled, p, 6, 4, rule, &current) == base);
  }
}

TEST_CASE("scaled aggregation is unbiased over all client subsets") {
  Rng rng(6);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.1, 1.0);
  for (int m = 2; m <= 6; ++m) {
    std::vector<double> p(static_cast<std::size_t>(m));
    for (auto& v : p) v = unit(rng);
    const double total = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& v : p) v /= total;
    std::vector<ParamVector> phi;
    ParamVector full = ParamVector::Zero(3);
    for (int i = 0; i < m; ++i) {
      phi.push_back(ParamVector::NullaryExpr(3, [&] { return normal(rng); }));
      full += p[static_cast<std::size_t>(i)] * phi.back();
    }
    for (int a = 1; a <= m; ++a) {
      const auto all = subsets(m, a);
      ParamVector mean = ParamVector::Zero(3);
      for (const auto& s : all) {
        std::vector<LocalUpdate> locals;
        for (int i : s) locals.push_back({i, phi[static_cast<std::size_t>(i)]});
        mean += aggregate_fedbis(locals, p, m, a);
      }
      mean /= static_cast<double>(all.size());
      CHECK(mean.isApprox(full, 1e-12));
    }
  }
}

TEST_CASE("aggregation validates its inputs") {
  const std::vector<double> p{0.5, 0.5};
  std::vector<LocalUpdate> bad{{2, ParamVector::Zero(2)}};
  CHECK_THROWS_AS(aggregate_fedbis(bad, p, 2, 1), IndexError);
  std::vector<LocalUpdate> mixed{{0, ParamVector::Zero(2)}, {1, ParamVector::Zero(3)}};
  CHECK_THROWS_AS(aggregate_fedbis(mixed, p, 2, 2), ShapeError);
  CHECK_THROWS_AS(aggregate_fedbis({}, p, 2, 1), EmptyBatchError);
  CHECK_THROWS(aggregate_fedbis({}, p, 2, 1, AggregationRule::kAnchored));
  CHECK(aggregation_rule_from_string(to_string(AggregationRule::kAnchored)) == AggregationRule::kAnchored);
}

TEST_CASE("byte counters grow by A uploads and A broadcasts per round") {
  const auto w = small_world(6, 20);
  const auto start = initial(w);
  const auto res = run_fedbis(small_fl(3, 7), w.clients, start);
  REQUIRE(res.logs.size() == 7);
  const auto c = param_bytes(start.params);
  CHECK(res.logs.back().broadcast_bytes == 7 * 3 * c);
  CHECK(res.logs.back().upload_bytes == 7 * 3 * c);
  CHECK(res.logs.back().grouping_bytes == 0);
  for (std::size_t r = 0; r < res.logs.size(); ++r) {
    CHECK(res.logs[r].round == static_cast<int>(r));
    CHECK(res.logs[r].sampled.size() == 3);
    CHECK(res.logs[r].phase == "fedbis");
  }
  CHECK(res.logs.back().checksum == checksum(res.selector.params));
}

TEST_CASE("runs are identical across seeds reuse and thread counts") {
  const auto w = small_world(8, 30);
  const auto start = initial(w);
  auto fc = small_fl(4, 5);
  const auto a = run_fedbis(fc, w.clients, start);
  const auto b = run_fedbis(fc, w.clients, start);
  fc.threads = 4;
  const auto c = run_fedbis(fc, w.clients, start);
  CHECK(a.selector.params == b.selector.params);
  CHECK(a.selector.params == c.selector.params);
  for (std::size_t r = 0; r < a.logs.size(); ++r) CHECK(a.logs[r].checksum == c.logs[r].checksum);
  fc.seed = 10;
  CHECK(run_fedbis(fc, w.clients, start).selector.params != a.selector.params);
}

TEST_CASE("round hook sees every round") {
  const auto w = small_world(4, 10);
  std::vector<int> seen;
  run_fedbis(small_fl(2, 4), w.clients, initial(w), [&](int r, const Selector&) { seen.push_back(r); });
  CHECK(seen == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("config validation") {
  const auto w = small_world(4, 10);
  auto fc = small_fl(5, 1);
  CHECK_THROWS(run_fedbis(fc, w.clients, initial(w)));
  fc = small_fl(2, 0);
  CHECK_THROWS(run_fedbis(fc, w.clients, initial(w)));
  CHECK_THROWS(run_fedbis(small_fl(1, 1), std::span<const ClientDataset>(), initial(w)));
}

TEST_CASE("fedbis learns a homogeneous world") {
  SyntheticWorldSpec spec;
  spec.num_clusters = 1;
  spec.clients_per_cluster = {10};
  spec.prompt_dim = 2;
  spec.pairs_per_client = 200;
  spec.seed = 4;
  const auto w = generate_synthetic_world(spec);
  FLConfig fc;
  fc.clients_per_round = 5;
  fc.local_iters = 30;
  fc.rounds = 100;
  fc.optimizer.lr = 1e-2;
  fc.seed = 4;
  const auto res = run_fedbis(fc, w.clients, initial(w, {16}));
  const std::vector<Selector> one{res.selector};
  CHECK(agreement(one, sample_heldout(w, 50, 99)) >= 0.9);
}
