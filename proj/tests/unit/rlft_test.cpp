#include "fedrlhf/data/world.hpp"
#include "fedrlhf/rlft/rlft.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace fedrlhf;

namespace {

// Selector whose logit difference is a fixed sign: logit 0 = bias0, logit 1 = bias1.
Selector constant_selector(int dx, int dy, double bias0, double bias1) {
  Selector s(SelectorArch{dx, dy, {}});
  s.params[s.params.size() - 2] = bias0;
  s.params[s.params.size() - 1] = bias1;
  return s;
}

SyntheticWorld tiny_world() {
  SyntheticWorldSpec spec;
  spec.pairs_per_client = 3;
  spec.vocab_size = 8;
  spec.seed = 6;
  return generate_synthetic_world(spec);
}

}  // namespace

TEST_CASE("enumerate_pairs lists index pairs lexicographically") {
  CHECK(enumerate_pairs(2) == std::vector<std::pair<int, int>>{{0, 1}});
  CHECK(enumerate_pairs(4) == std::vector<std::pair<int, int>>{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}});
  for (int n = 2; n < 10; ++n) CHECK(enumerate_pairs(n).size() == static_cast<std::size_t>(n * (n - 1) / 2));
  CHECK_THROWS(enumerate_pairs(1));
}

TEST_CASE("single selector labels by the larger logit with ties going to the second completion") {
  const VectorXd x = VectorXd::Ones(2), y = VectorXd::Ones(2);
  CHECK(label_pair_single(constant_selector(2, 2, 1, 0), x, y, y) == 0);
  CHECK(label_pair_single(constant_selector(2, 2, 0, 1), x, y, y) == 1);
  CHECK(label_pair_single(constant_selector(2, 2, 0.5, 0.5), x, y, y) == 1);
}

TEST_CASE("majority vote counts votes and breaks even ties toward label one") {
  const VectorXd x = VectorXd::Ones(2), y = VectorXd::Ones(2);
  const auto zero = constant_selector(2, 2, 1, 0), one = constant_selector(2, 2, 0, 1);
  const std::vector<Selector> two_one{zero, one, zero};
  auto v = label_pair_majority(two_one, x, y, y);
  CHECK(v.label == 0);
  CHECK(v.votes == std::vector<int>{0, 1, 0});
  const std::vector<Selector> tie{zero, one};
  CHECK(label_pair_majority(tie, x, y, y).label == 1);
  const std::vector<Selector> unanimous{one, one, one};
  CHECK(label_pair_majority(unanimous, x, y, y).label == 1);
  CHECK_THROWS(label_pair_majority({}, x, y, y));
}

TEST_CASE("generated dataset labels every completion pair of every instruction") {
  const auto w = tiny_world();
  const auto reference = reference_policy(w, 1);
  const auto instructions = sample_prompts(w.spec, 5, 2);
  const std::vector<Selector> sels{constant_selector(4, 4, 1, 0)};
  const auto data = build_generated_dataset(reference, sels, instructions, 4, 3);
  REQUIRE(data.size() == 5 * 6);
  for (std::size_t k = 0; k < data.size(); ++k) {
    CHECK(data[k].instruction == k / 6);
    CHECK(data[k].x == instructions[k / 6]);
    CHECK(data[k].label == 0);
    CHECK(data[k].votes == std::vector<int>{0});
  }
  // completions are drawn once per instruction: pair (0, 1) and (0, 2) share y0
  CHECK(data[0].y0 == data[1].y0);
  CHECK(data[3].y0 == data[0].y1);

  const auto again = build_generated_dataset(reference, sels, instructions, 4, 3, 4);
  for (std::size_t k = 0; k < data.size(); ++k) CHECK(again[k].y1 == data[k].y1);
}

TEST_CASE("dpo loss at the reference is log 2") {
  const auto w = tiny_world();
  const auto reference = reference_policy(w, 2);
  GeneratedPreferenceRecord r{0, sample_prompts(w.spec, 1, 1)[0], 1, 5, 0, {}};
  CHECK(dpo_loss(reference, reference, r, 0.1) == doctest::Approx(std::numbers::ln2));
  r.label = 1;
  CHECK(dpo_loss(reference, reference, r, 3.0) == doctest::Approx(std::numbers::ln2));
}

TEST_CASE("dpo loss matches its closed form away from the reference") {
  const auto w = tiny_world();
  const auto reference = reference_policy(w, 2);
  auto policy = reference_policy(w, 9);
  const GeneratedPreferenceRecord r{0, sample_prompts(w.spec, 1, 1)[0], 2, 6, 1, {}};
  const double z = 0.5 * ((policy_logprob(policy, r.x, 6) - policy_logprob(reference, r.x, 6)) -
                          (policy_logprob(policy, r.x, 2) - policy_logprob(reference, r.x, 2)));
  CHECK(dpo_loss(policy, reference, r, 0.5) == doctest::Approx(std::log1p(std::exp(-z))));
  const std::vector<GeneratedPreferenceRecord> batch{r, r};
  CHECK(dpo_batch_loss(policy, reference, batch, 0.5) == doctest::Approx(dpo_loss(policy, reference, r, 0.5)));
}

TEST_CASE("zero-step and zero-rate dpo return the reference") {
  const auto w = tiny_world();
  const auto reference = reference_policy(w, 2);
  const auto data = build_generated_dataset(reference, std::vector<Selector>{constant_selector(4, 4, 0, 1)},
                                            sample_prompts(w.spec, 3, 1), 3, 1);
  DPOConfig dc;
  dc.steps = 0;
  CHECK(dpo_train(reference, data, dc).params == reference.params);
  dc.steps = 20;
  dc.optimizer.lr = 0.0;
  CHECK(dpo_train(reference, data, dc).params == reference.params);
}

TEST_CASE("dpo raises the preferred completion's probability") {
  const auto w = tiny_world();
  const auto reference = reference_policy(w, 2);
  const auto data = build_generated_dataset(reference, std::vector<Selector>{constant_selector(4, 4, 1, 0)},
                                            sample_prompts(w.spec, 20, 1), 4, 1);
  DPOConfig dc;
  dc.steps = 100;
  dc.optimizer.lr = 1e-2;
  const auto policy = dpo_train(reference, data, dc);
  CHECK(dpo_batch_loss(policy, reference, data, dc.beta) < dpo_batch_loss(reference, reference, data, dc.beta));
  const auto again = dpo_train(reference, data, dc);
  CHECK(again.params == policy.params);
}

TEST_CASE("dpo validation") {
  const auto w = tiny_world();
  const auto reference = reference_policy(w, 2);
  DPOConfig dc;
  dc.beta = 0.0;
  const GeneratedPreferenceDataset one{{0, VectorXd::Ones(4), 0, 1, 0, {}}};
  CHECK_THROWS(dpo_train(reference, one, dc));
  CHECK_THROWS(dpo_train(reference, {}, DPOConfig{}));
  CHECK_THROWS_AS(dpo_grad(reference, reference, {}, 0.1), EmptyBatchError);
  GeneratedPreferenceRecord bad{0, VectorXd::Ones(4), 0, 99, 0, {}};
  CHECK_THROWS_AS(dpo_loss(reference, reference, bad, 0.1), IndexError);
}
