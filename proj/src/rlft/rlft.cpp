#include "fedrlhf/rlft/rlft.hpp"

#include "fedrlhf/core/parallel.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace fedrlhf {

std::vector<std::pair<int, int>> enumerate_pairs(int n) {
  if (n < 2) throw std::invalid_argument("enumerate_pairs: need at least two completions");
  std::vector<std::pair<int, int>> out;
  out.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1) / 2);
  for (int j = 0; j < n; ++j) {
    for (int l = j + 1; l < n; ++l) out.emplace_back(j, l);
  }
  return out;
}

MajorityLabel label_pair_majority(std::span<const Selector> selectors, const VectorXd& x, const VectorXd& first,
                                  const VectorXd& second) {
  if (selectors.empty()) throw std::invalid_argument("label_pair_majority: no selectors");
  MajorityLabel out;
  int zeros = 0;
  for (const auto& s : selectors) {
    const int v = label_pair_single(s, x, first, second);
    out.votes.push_back(v);
    zeros += v == 0;
  }
  const int ones = static_cast<int>(selectors.size()) - zeros;
  out.label = zeros > ones ? 0 : 1;
  return out;
}

GeneratedPreferenceDataset build_generated_dataset(const Policy& reference, std::span<const Selector> selectors,
                                                   std::span<const VectorXd> instructions, int n, std::uint64_t seed,
                                                   int threads) {
  if (instructions.empty()) throw std::invalid_argument("build_generated_dataset: no instructions");
  const auto pairs = enumerate_pairs(n);
  Policy sampler = reference;
  sampler.temperature = 1.0;
  const auto& vocab = *reference.vocab;

  std::vector<GeneratedPreferenceDataset> per_instruction(instructions.size());
  parallel_for(instructions.size(), threads, [&](std::size_t i) {
    auto rng = make_stream(seed, "gen/" + std::to_string(i));
    const auto& x = instructions[i];
    const auto completions = policy_sample(sampler, x, n, rng);
    auto& out = per_instruction[i];
    for (auto [j, l] : pairs) {
      GeneratedPreferenceRecord rec;
      rec.instruction = i;
      rec.x = x;
      rec.y0 = completions[static_cast<std::size_t>(j)];
      rec.y1 = completions[static_cast<std::size_t>(l)];
      auto vote = label_pair_majority(selectors, x, vocab.row(rec.y0).transpose(), vocab.row(rec.y1).transpose());
      rec.label = vote.label;
      rec.votes = std::move(vote.votes);
      out.push_back(std::move(rec));
    }
  });
  GeneratedPreferenceDataset dataset;
  dataset.reserve(instructions.size() * pairs.size());
  for (auto& part : per_instruction) {
    for (auto& rec : part) dataset.push_back(std::move(rec));
  }
  return dataset;
}

void DPOConfig::validate() const {
  if (!(beta > 0.0)) throw std::invalid_argument("dpo: beta must be > 0");
  if (steps < 0) throw std::invalid_argument("dpo: steps must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("dpo: batch_size must be >= 1");
  optimizer.validate();
}

namespace {

// log(1 + exp(t)) without overflow.
double softplus(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sigmoid(double t) { return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)); }

struct Margin {
  double z;
  int preferred;
  int other;
};

Margin dpo_margin(const Policy& policy, const Policy& reference, const GeneratedPreferenceRecord& r, double beta) {
  if (r.label != 0 && r.label != 1) throw std::invalid_argument("dpo: label must be 0 or 1");
  if (policy.vocab_size() != reference.vocab_size()) throw ShapeError("dpo: policies do not share a vocabulary");
  const int w = r.label == 0 ? r.y0 : r.y1;
  const int l = r.label == 0 ? r.y1 : r.y0;
  const VectorXd lp = policy_logprobs(policy, r.x);
  const VectorXd lp0 = policy_logprobs(reference, r.x);
  if (w < 0 || w >= lp.size() || l < 0 || l >= lp.size()) throw IndexError("dpo: completion id out of range");
  return {beta * ((lp[w] - lp0[w]) - (lp[l] - lp0[l])), w, l};
}

}  // namespace

double dpo_loss(const Policy& policy, const Policy& reference, const GeneratedPreferenceRecord& record, double beta) {
  return softplus(-dpo_margin(policy, reference, record, beta).z);
}

double dpo_batch_loss(const Policy& policy, const Policy& reference, std::span<const GeneratedPreferenceRecord> batch,
                      double beta) {
  if (batch.empty()) throw EmptyBatchError("dpo: empty batch");
  double total = 0.0;
  for (const auto& r : batch) total += dpo_loss(policy, reference, r, beta);
  return total / static_cast<double>(batch.size());
}

ParamVector dpo_grad(const Policy& policy, const Policy& reference, std::span<const GeneratedPreferenceRecord> batch,
                     double beta) {
  if (batch.empty()) throw EmptyBatchError("dpo_grad: empty batch");
  ParamVector grad = ParamVector::Zero(policy.params.size());
  for (const auto& r : batch) {
    const auto m = dpo_margin(policy, reference, r, beta);
    // d/dz softplus(-z) = -sigmoid(-z)
    const double coeff = -sigmoid(-m.z) * beta;
    if (coeff == 0.0) continue;
    grad += coeff * (policy_logprob_grad(policy, r.x, m.preferred) - policy_logprob_grad(policy, r.x, m.other));
  }
  return grad / static_cast<double>(batch.size());
}

Policy dpo_train(const Policy& reference, const GeneratedPreferenceDataset& dataset, const DPOConfig& config) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("dpo_train: empty dataset");
  Policy policy = reference;
  OptimizerState state(config.optimizer, policy.params.size());
  auto rng = make_stream(config.seed, "dpo");
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
  std::vector<GeneratedPreferenceRecord> batch;
  for (int t = 0; t < config.steps; ++t) {
    batch.clear();
    for (int b = 0; b < config.batch_size; ++b) batch.push_back(dataset[pick(rng)]);
    optimizer_step(state, policy.params, dpo_grad(policy, reference, batch, config.beta));
  }
  return policy;
}

}  // namespace fedrlhf
