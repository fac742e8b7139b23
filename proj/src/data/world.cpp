#include "fedrlhf/data/world.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace fedrlhf {

int SyntheticWorldSpec::num_clients() const {
  return std::accumulate(clients_per_cluster.begin(), clients_per_cluster.end(), 0);
}

void SyntheticWorldSpec::validate() const {
  if (num_clusters < 1) throw DegenerateSpecError("world: num_clusters must be >= 1");
  if (static_cast<int>(clients_per_cluster.size()) != num_clusters) {
    throw DegenerateSpecError("world: clients_per_cluster must list one size per cluster");
  }
  for (int c : clients_per_cluster) {
    if (c < 1) throw DegenerateSpecError("world: every cluster needs at least one client");
  }
  if (vocab_size < 2) throw DegenerateSpecError("world: vocabulary needs at least two completions");
  if (prompt_dim < 1 || completion_dim < 1) throw DegenerateSpecError("world: dims must be positive");
  if (pairs_per_client < 3) throw DegenerateSpecError("world: pairs_per_client must be >= 3");
  if (!(separation >= 0.0 && separation <= 1.0)) throw DegenerateSpecError("world: separation must lie in [0, 1]");
  if (!(bt_temperature > 0.0)) throw DegenerateSpecError("world: bt_temperature must be positive");
  if (!(label_noise >= 0.0 && label_noise <= 1.0)) throw DegenerateSpecError("world: label_noise must lie in [0, 1]");
}

RewardOracle::RewardOracle(int prompt_dim, std::shared_ptr<const MatrixXd> vocab, MatrixXd weights, VectorXd mass)
    : prompt_dim_(prompt_dim), vocab_(std::move(vocab)), weights_(std::move(weights)), mass_(std::move(mass)) {
  require_dim(weights_.cols(), Eigen::Index(prompt_dim_) * vocab_->cols(), "oracle weights");
  require_dim(mass_.size(), weights_.rows(), "oracle mass");
  if (!weights_.allFinite()) throw std::invalid_argument("oracle: non-finite reward weights");
}

double RewardOracle::reward(const VectorXd& x, const VectorXd& y, std::optional<int> cluster) const {
  const VectorXd psi = bilinear_features(x, y);
  require_dim(psi.size(), weights_.cols(), "oracle features");
  if (cluster) {
    if (*cluster < 0 || *cluster >= num_clusters()) {
      throw IndexError("oracle: unknown cluster id " + std::to_string(*cluster));
    }
    return weights_.row(*cluster).dot(psi);
  }
  return mass_.dot(weights_ * psi);
}

double RewardOracle::reward(const VectorXd& x, int completion, std::optional<int> cluster) const {
  if (completion < 0 || completion >= vocab_->rows()) throw IndexError("oracle: completion id out of range");
  return reward(x, VectorXd(vocab_->row(completion).transpose()), cluster);
}

VectorXd sample_prompt(const SyntheticWorldSpec& spec, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd x(spec.prompt_dim);
  x[0] = 1.0;
  for (int i = 1; i < spec.prompt_dim; ++i) x[i] = normal(rng);
  return x;
}

std::vector<VectorXd> sample_prompts(const SyntheticWorldSpec& spec, int count, std::uint64_t seed) {
  auto rng = make_stream(seed, "prompts");
  std::vector<VectorXd> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(sample_prompt(spec, rng));
  return out;
}

int label_completions(const SyntheticWorldSpec& spec, const RewardOracle& oracle, const VectorXd& x, int a, int b,
                      int cluster, Rng& rng) {
  const double ra = oracle.reward(x, a, cluster);
  const double rb = oracle.reward(x, b, cluster);
  int label;
  if (spec.label_model == LabelModel::kDeterministic) {
    label = ra >= rb ? 0 : 1;
  } else {
    const double p_a = 1.0 / (1.0 + std::exp(-(ra - rb) / spec.bt_temperature));
    label = std::bernoulli_distribution(p_a)(rng) ? 0 : 1;
  }
  if (spec.label_noise > 0.0 && std::bernoulli_distribution(spec.label_noise)(rng)) label = 1 - label;
  return label;
}

namespace {

std::pair<int, int> distinct_pair(int vocab_size, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, vocab_size - 1);
  const int a = pick(rng);
  int b = pick(rng);
  while (b == a) b = pick(rng);
  return {a, b};
}

}  // namespace

SyntheticWorld generate_synthetic_world(const SyntheticWorldSpec& spec) {
  spec.validate();
  SyntheticWorld world;
  world.spec = spec;

  std::normal_distribution<double> normal(0.0, 1.0);
  {
    auto rng = make_stream(spec.seed, "world/vocab");
    MatrixXd vocab(spec.vocab_size, spec.completion_dim);
    for (Eigen::Index i = 0; i < vocab.size(); ++i) vocab.data()[i] = normal(rng);
    world.vocab = std::make_shared<const MatrixXd>(std::move(vocab));
  }

  const Eigen::Index nf = Eigen::Index(spec.prompt_dim) * spec.completion_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.completion_dim));
  MatrixXd weights(spec.num_clusters, nf);
  {
    auto rng = make_stream(spec.seed, "world/rewards");
    VectorXd shared(nf);
    for (Eigen::Index i = 0; i < nf; ++i) shared[i] = normal(rng);
    const double a = std::sqrt(1.0 - spec.separation), b = std::sqrt(spec.separation);
    for (int u = 0; u < spec.num_clusters; ++u) {
      for (Eigen::Index i = 0; i < nf; ++i) weights(u, i) = scale * (a * shared[i] + b * normal(rng));
    }
  }
  VectorXd mass(spec.num_clusters);
  const double total = spec.num_clients();
  for (int u = 0; u < spec.num_clusters; ++u) mass[u] = spec.clients_per_cluster[static_cast<std::size_t>(u)] / total;
  world.oracle = RewardOracle(spec.prompt_dim, world.vocab, std::move(weights), std::move(mass));

  for (int u = 0; u < spec.num_clusters; ++u) {
    for (int k = 0; k < spec.clients_per_cluster[static_cast<std::size_t>(u)]; ++k) world.latent.push_back(u);
  }

  const auto& vocab = *world.vocab;
  world.client_pairs.resize(world.latent.size());
  for (std::size_t m = 0; m < world.latent.size(); ++m) {
    auto rng = make_stream(spec.seed, "world/pairs/" + std::to_string(m));
    const int cluster = world.latent[m];
    auto& pairs = world.client_pairs[m];
    for (int k = 0; k < spec.pairs_per_client; ++k) {
      VectorXd x = sample_prompt(spec, rng);
      auto [a, b] = distinct_pair(spec.vocab_size, rng);
      const int label = label_completions(spec, world.oracle, x, a, b, cluster, rng);
      const int win = label == 0 ? a : b;
      const int lose = label == 0 ? b : a;
      RawPreferencePair p;
      p.x = std::move(x);
      p.chosen = vocab.row(win).transpose();
      p.rejected = vocab.row(lose).transpose();
      p.worker = "client-" + std::to_string(m);
      p.prompt_id = "c" + std::to_string(m) + "-p" + std::to_string(k);
      pairs.push_back(std::move(p));
    }
  }
  world.clients = build_client_datasets(world.client_pairs, spec.symmetrize, spec.val_fraction,
                                        derive_seed(spec.seed, "world/split"));
  return world;
}

std::vector<SymmetrizedExample> sample_heldout(const SyntheticWorld& world, int pairs_per_client,
                                               std::uint64_t seed) {
  const auto& spec = world.spec;
  const auto& vocab = *world.vocab;
  std::vector<SymmetrizedExample> out;
  std::size_t source = 0;
  for (std::size_t m = 0; m < world.latent.size(); ++m) {
    auto rng = make_stream(seed, "heldout/" + std::to_string(m));
    for (int k = 0; k < pairs_per_client; ++k) {
      VectorXd x = sample_prompt(spec, rng);
      auto [a, b] = distinct_pair(spec.vocab_size, rng);
      const double ra = world.oracle.reward(x, a, world.latent[m]);
      const double rb = world.oracle.reward(x, b, world.latent[m]);
      const int win = ra >= rb ? a : b;
      const int lose = ra >= rb ? b : a;
      VectorXd yw = vocab.row(win).transpose(), yl = vocab.row(lose).transpose();
      out.push_back({x, yw, yl, 0, source});
      out.push_back({x, yl, yw, 1, source});
      ++source;
    }
  }
  return out;
}

Policy reference_policy(const SyntheticWorld& world, std::uint64_t seed, double scale) {
  auto rng = make_stream(seed, "reference-policy");
  std::normal_distribution<double> normal(0.0, scale);
  Policy policy = make_policy(world.spec.prompt_dim, world.vocab, 1.0);
  for (Eigen::Index i = 0; i < policy.params.size(); ++i) policy.params[i] = normal(rng);
  return policy;
}

}  // namespace fedrlhf
