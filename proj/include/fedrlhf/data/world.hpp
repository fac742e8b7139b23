#pragma once

// Synthetic preference world: clients belong to latent clusters, each cluster
// labels completion pairs with its own bilinear reward r_u(x, y) = x^T W_u y.
// The reward weights double as the oracle that replaces human/LLM judges.

#include "fedrlhf/core/policy.hpp"
#include "fedrlhf/core/rng.hpp"
#include "fedrlhf/data/preference.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace fedrlhf {

enum class LabelModel { kDeterministic, kBradleyTerry };

struct SyntheticWorldSpec {
  int num_clusters = 3;
  std::vector<int> clients_per_cluster{10, 10, 10};
  int prompt_dim = 4;  // coordinate 0 is a constant 1
  int completion_dim = 4;
  int vocab_size = 32;
  int pairs_per_client = 100;
  // 0: every cluster shares one reward; 1: cluster rewards drawn independently.
  double separation = 1.0;
  LabelModel label_model = LabelModel::kDeterministic;
  double bt_temperature = 1.0;
  // Probability that a generated label is flipped after labeling.
  double label_noise = 0.0;
  double val_fraction = 0.1;
  SymmetrizeMode symmetrize = SymmetrizeMode::kBoth;
  std::uint64_t seed = 0;

  int num_clients() const;
  void validate() const;
};

class RewardOracle {
 public:
  RewardOracle() = default;
  // weights: one row per cluster, prompt_dim * completion_dim columns laid out
  // as vec(W_u); mass: population weight of each cluster.
  RewardOracle(int prompt_dim, std::shared_ptr<const MatrixXd> vocab, MatrixXd weights, VectorXd mass);

  int num_clusters() const { return static_cast<int>(weights_.rows()); }
  int prompt_dim() const { return prompt_dim_; }
  const MatrixXd& weights() const { return weights_; }
  const VectorXd& mass() const { return mass_; }
  const std::shared_ptr<const MatrixXd>& vocab() const { return vocab_; }

  // r_u(x, y) for `cluster`, or the population-weighted mean over clusters.
  double reward(const VectorXd& x, const VectorXd& y, std::optional<int> cluster = std::nullopt) const;
  double reward(const VectorXd& x, int completion, std::optional<int> cluster = std::nullopt) const;

 private:
  int prompt_dim_ = 0;
  std::shared_ptr<const MatrixXd> vocab_;
  MatrixXd weights_;
  VectorXd mass_;
};

struct SyntheticWorld {
  SyntheticWorldSpec spec;
  std::shared_ptr<const MatrixXd> vocab;
  RewardOracle oracle;
  std::vector<int> latent;  // client -> cluster; evaluation only
  std::vector<std::vector<RawPreferencePair>> client_pairs;
  std::vector<ClientDataset> clients;
};

struct DegenerateSpecError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

SyntheticWorld generate_synthetic_world(const SyntheticWorldSpec& spec);

// Draws the label for (x, a, b) under cluster u: 0 if a is preferred.
int label_completions(const SyntheticWorldSpec& spec, const RewardOracle& oracle, const VectorXd& x, int a, int b,
                      int cluster, Rng& rng);

VectorXd sample_prompt(const SyntheticWorldSpec& spec, Rng& rng);
std::vector<VectorXd> sample_prompts(const SyntheticWorldSpec& spec, int count, std::uint64_t seed);

// Fresh pairs from every client's distribution, labeled noise-free by the
// client's own cluster reward, symmetrized in both orders.
std::vector<SymmetrizedExample> sample_heldout(const SyntheticWorld& world, int pairs_per_client,
                                               std::uint64_t seed);

// Reference policy theta_0 with small random weights.
Policy reference_policy(const SyntheticWorld& world, std::uint64_t seed, double scale = 0.5);

}  // namespace fedrlhf
