#include "fedrlhf/data/partition.hpp"
#include "fedrlhf/data/preference.hpp"
#include "fedrlhf/data/world.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

using namespace fedrlhf;

namespace {

std::vector<RawPreferencePair> make_pairs(int n, int domains = 1, int pairs_per_prompt = 1) {
  std::vector<RawPreferencePair> out;
  for (int i = 0; i < n; ++i) {
    RawPreferencePair p;
    p.x = VectorXd::Constant(2, i);
    p.chosen = VectorXd::Constant(2, 1.0);
    p.rejected = VectorXd::Constant(2, -1.0);
    p.worker = "w" + std::to_string(i % 3);
    p.domain = "d" + std::to_string((i / pairs_per_prompt) % domains);
    p.prompt_id = "p" + std::to_string(i / pairs_per_prompt);
    out.push_back(std::move(p));
  }
  return out;
}

// Mean total-variation distance between each client's domain mix and the global mix.
double mean_domain_tv(const std::vector<RawPreferencePair>& pairs, const Partition& part, int domains) {
  std::vector<double> global(static_cast<std::size_t>(domains), 0.0);
  for (const auto& p : pairs) global[static_cast<std::size_t>(std::stoi(p.domain->substr(1)))] += 1.0 / pairs.size();
  double tv = 0.0;
  int counted = 0;
  for (const auto& client : part) {
    if (client.empty()) continue;
    std::vector<double> mix(static_cast<std::size_t>(domains), 0.0);
    for (auto i : client) mix[static_cast<std::size_t>(std::stoi(pairs[i].domain->substr(1)))] += 1.0 / client.size();
    double d = 0.0;
    for (std::size_t k = 0; k < mix.size(); ++k) d += std::abs(mix[k] - global[k]);
    tv += d / 2;
    ++counted;
  }
  return tv / counted;
}

void check_cover(const Partition& part, std::size_t n) {
  std::vector<int> seen(n, 0);
  for (const auto& c : part) {
    for (auto i : c) ++seen[i];
  }
  CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
}

}  // namespace

TEST_CASE("symmetrize both doubles the data with complementary labels") {
  const auto pairs = make_pairs(50);
  Rng rng(1);
  const auto ex = symmetrize(pairs, SymmetrizeMode::kBoth, rng);
  REQUIRE(ex.size() == 100);
  for (std::size_t i = 0; i < 50; ++i) {
    const auto& a = ex[2 * i];
    const auto& b = ex[2 * i + 1];
    CHECK(a.source == i);
    CHECK(b.source == i);
    CHECK(a.label == 0);
    CHECK(b.label == 1);
    CHECK(a.y0 == b.y1);
    CHECK(a.y1 == b.y0);
    CHECK(a.y0 == pairs[i].chosen);
  }
}

TEST_CASE("symmetrize sampled keeps one ordering with balanced labels") {
  const auto pairs = make_pairs(4000);
  Rng rng(2);
  const auto ex = symmetrize(pairs, SymmetrizeMode::kSampled, rng);
  REQUIRE(ex.size() == 4000);
  double ones = 0;
  for (const auto& e : ex) {
    ones += e.label;
    const auto& preferred = e.label == 0 ? e.y0 : e.y1;
    CHECK(preferred == pairs[e.source].chosen);
  }
  CHECK(ones / 4000 == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("train/validation split never separates the two orderings of a pair") {
  for (int n : {3, 10, 57, 200}) {
    const auto pairs = make_pairs(n);
    Rng rng(static_cast<std::uint64_t>(n));
    const auto ex = symmetrize(pairs, SymmetrizeMode::kBoth, rng);
    const auto split = split_train_val(ex, 0.1, rng);
    std::set<std::size_t> tr, va;
    for (const auto& e : split.train) tr.insert(e.source);
    for (const auto& e : split.val) va.insert(e.source);
    for (auto s : va) CHECK(tr.count(s) == 0);
    CHECK(tr.size() + va.size() == static_cast<std::size_t>(n));
    CHECK(va.size() == static_cast<std::size_t>(std::max<long long>(1, std::llround(0.1 * n))));
    CHECK(tr.size() > va.size());
    CHECK(split.train.size() + split.val.size() == ex.size());
  }
}

TEST_CASE("split rejects too little data and bad fractions") {
  Rng rng(0);
  const auto two = symmetrize(make_pairs(2), SymmetrizeMode::kBoth, rng);
  CHECK_THROWS_AS(split_train_val(two, 0.1, rng), SplitError);
  const auto many = symmetrize(make_pairs(20), SymmetrizeMode::kBoth, rng);
  CHECK_THROWS_AS(split_train_val(many, 0.0, rng), SplitError);
  CHECK_THROWS_AS(split_train_val(many, 0.5, rng), SplitError);
}

TEST_CASE("client datasets carry size-proportional weights") {
  std::vector<std::vector<RawPreferencePair>> per_client{make_pairs(10), make_pairs(30), make_pairs(2)};
  const auto clients = build_client_datasets(per_client, SymmetrizeMode::kBoth, 0.1, 4);
  REQUIRE(clients.size() == 3);
  CHECK(clients[0].weight == doctest::Approx(10.0 / 42));
  CHECK(clients[1].weight == doctest::Approx(30.0 / 42));
  CHECK(clients[2].weight == doctest::Approx(2.0 / 42));
  CHECK(clients[2].val.empty());
  CHECK(clients[2].train.size() == 4);
  CHECK(clients[1].val.size() == 6);
  CHECK_THROWS_AS(build_client_datasets({{}, {}}, SymmetrizeMode::kBoth, 0.1, 0), SplitError);

  const auto pooled = pool_clients(clients);
  CHECK(pooled.num_pairs == 42);
  CHECK(pooled.train.size() + pooled.val.size() == 84);
  std::set<std::size_t> sources;
  for (const auto& e : pooled.train) sources.insert(e.source);
  for (const auto& e : pooled.val) sources.insert(e.source);
  CHECK(sources.size() == 42);
}

TEST_CASE("worker partition groups by worker id and rejects missing ids") {
  auto pairs = make_pairs(9);
  const auto by = partition_by_worker(pairs);
  REQUIRE(by.size() == 3);
  CHECK(by.at("w1") == std::vector<std::size_t>{1, 4, 7});
  check_cover(to_partition(by), pairs.size());
  pairs[4].worker.reset();
  CHECK_THROWS_AS(partition_by_worker(pairs), IngestionError);
}

TEST_CASE("dirichlet partition covers the data and keeps prompts whole") {
  const auto pairs = make_pairs(600, 4, 3);
  Rng rng(5);
  const auto part = partition_dirichlet(pairs, 10, 0.3, rng);
  REQUIRE(part.size() == 10);
  check_cover(part, pairs.size());
  std::map<std::string, std::set<std::size_t>> owner;
  for (std::size_t c = 0; c < part.size(); ++c) {
    for (auto i : part[c]) owner[pairs[i].prompt_id].insert(c);
  }
  for (const auto& [id, clients] : owner) CHECK(clients.size() == 1);
}

TEST_CASE("small dirichlet concentration gives more heterogeneous clients") {
  const auto pairs = make_pairs(2000, 5);
  double tv_small = 0, tv_large = 0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    Rng a(s), b(s);
    tv_small += mean_domain_tv(pairs, partition_dirichlet(pairs, 10, 0.3, a), 5);
    tv_large += mean_domain_tv(pairs, partition_dirichlet(pairs, 10, 100.0, b), 5);
  }
  CHECK(tv_small > 3 * tv_large);
  CHECK(tv_small / 5 > 0.3);
}

TEST_CASE("huge dirichlet concentration splits each domain almost evenly") {
  const auto pairs = make_pairs(1000, 2);
  Rng rng(8);
  const auto part = partition_dirichlet(pairs, 10, 1e6, rng);
  for (const auto& c : part) CHECK(std::abs(static_cast<int>(c.size()) - 100) <= 2);
}

TEST_CASE("dirichlet partition validates input") {
  auto pairs = make_pairs(10);
  Rng rng(0);
  CHECK_THROWS(partition_dirichlet(pairs, 0, 1.0, rng));
  CHECK_THROWS(partition_dirichlet(pairs, 2, 0.0, rng));
  pairs[3].domain.reset();
  CHECK_THROWS_AS(partition_dirichlet(pairs, 2, 1.0, rng), IngestionError);
}

TEST_CASE("synthetic world labels agree with the cluster reward") {
  SyntheticWorldSpec spec;
  spec.pairs_per_client = 20;
  spec.seed = 3;
  const auto w = generate_synthetic_world(spec);
  REQUIRE(w.latent.size() == 30);
  REQUIRE(w.clients.size() == 30);
  for (std::size_t m = 0; m < w.client_pairs.size(); ++m) {
    for (const auto& p : w.client_pairs[m]) {
      CHECK(p.x[0] == 1.0);
      CHECK(w.oracle.reward(p.x, p.chosen, w.latent[m]) >= w.oracle.reward(p.x, p.rejected, w.latent[m]));
    }
  }
  const auto again = generate_synthetic_world(spec);
  CHECK(again.oracle.weights() == w.oracle.weights());
  CHECK(again.clients[7].train[3].y0 == w.clients[7].train[3].y0);
}

TEST_CASE("oracle reward is the bilinear form and linear in its weights") {
  SyntheticWorldSpec spec;
  spec.pairs_per_client = 3;
  const auto w = generate_synthetic_world(spec);
  Rng rng(1);
  const VectorXd x = sample_prompt(spec, rng);
  for (int y = 0; y < 4; ++y) {
    const VectorXd yv = w.vocab->row(y).transpose();
    for (int u = 0; u < 3; ++u) {
      const VectorXd flat = w.oracle.weights().row(u).transpose();
      const Eigen::Map<const MatrixXd> wu(flat.data(), spec.prompt_dim, spec.completion_dim);
      CHECK(w.oracle.reward(x, y, u) == doctest::Approx(x.dot(wu * yv)));
    }
    double mixed = 0;
    for (int u = 0; u < 3; ++u) mixed += w.oracle.mass()[u] * w.oracle.reward(x, y, u);
    CHECK(w.oracle.reward(x, y) == doctest::Approx(mixed));
    CHECK(w.oracle.reward(2.0 * x, y) == doctest::Approx(2.0 * w.oracle.reward(x, y)));
  }
  CHECK_THROWS_AS(w.oracle.reward(x, 0, 3), IndexError);
  CHECK_THROWS_AS(w.oracle.reward(x, 99), IndexError);
}

TEST_CASE("zero separation gives every cluster the same reward") {
  SyntheticWorldSpec spec;
  spec.separation = 0.0;
  spec.pairs_per_client = 3;
  const auto w = generate_synthetic_world(spec);
  CHECK(w.oracle.weights().row(0) == w.oracle.weights().row(2));
}

TEST_CASE("bradley-terry labels sharpen as the temperature falls") {
  SyntheticWorldSpec spec;
  spec.pairs_per_client = 3;
  const auto w = generate_synthetic_world(spec);
  auto agreement_at = [&](double temperature) {
    auto s = spec;
    s.label_model = LabelModel::kBradleyTerry;
    s.bt_temperature = temperature;
    Rng rng(2);
    int hits = 0;
    for (int t = 0; t < 4000; ++t) {
      const VectorXd x = sample_prompt(s, rng);
      const int a = t % 32, b = (t * 7 + 1) % 32;
      if (a == b) continue;
      const int truth = w.oracle.reward(x, a, 0) >= w.oracle.reward(x, b, 0) ? 0 : 1;
      hits += label_completions(s, w.oracle, x, a, b, 0, rng) == truth;
    }
    return hits / 4000.0;
  };
  const double cold = agreement_at(1e-6), warm = agreement_at(1.0), hot = agreement_at(1e6);
  CHECK(cold > 0.95);
  CHECK(warm < cold);
  CHECK(hot == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("label noise flips the stated fraction of labels") {
  SyntheticWorldSpec spec;
  spec.pairs_per_client = 3;
  const auto w = generate_synthetic_world(spec);
  auto noisy = spec;
  noisy.label_noise = 0.3;
  Rng rng(4);
  int flips = 0;
  for (int t = 0; t < 10000; ++t) {
    const VectorXd x = sample_prompt(spec, rng);
    const int truth = w.oracle.reward(x, 0, 1) >= w.oracle.reward(x, 1, 1) ? 0 : 1;
    flips += label_completions(noisy, w.oracle, x, 0, 1, 1, rng) != truth;
  }
  CHECK(flips / 10000.0 == doctest::Approx(0.3).epsilon(0.07));
}

TEST_CASE("world spec validation") {
  SyntheticWorldSpec spec;
  spec.clients_per_cluster = {10, 10};
  CHECK_THROWS_AS(generate_synthetic_world(spec), DegenerateSpecError);
  spec = {};
  spec.separation = 1.5;
  CHECK_THROWS_AS(generate_synthetic_world(spec), DegenerateSpecError);
  spec = {};
  spec.vocab_size = 1;
  CHECK_THROWS_AS(generate_synthetic_world(spec), DegenerateSpecError);
}

TEST_CASE("held-out pairs are labeled by each client's own cluster") {
  SyntheticWorldSpec spec;
  spec.pairs_per_client = 3;
  const auto w = generate_synthetic_world(spec);
  const auto held = sample_heldout(w, 4, 9);
  REQUIRE(held.size() == 30 * 4 * 2);
  for (std::size_t i = 0; i < held.size(); i += 2) {
    const int cluster = w.latent[held[i].source / 4];
    CHECK(w.oracle.reward(held[i].x, held[i].y0, cluster) >= w.oracle.reward(held[i].x, held[i].y1, cluster));
    CHECK(held[i + 1].label == 1);
  }
  CHECK(sample_heldout(w, 4, 9)[17].x == held[17].x);
}
