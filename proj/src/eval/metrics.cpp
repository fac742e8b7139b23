#include "fedrlhf/eval/metrics.hpp"

#include "fedrlhf/rlft/rlft.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <stdexcept>

namespace fedrlhf {

double agreement(std::span<const Selector> selectors, std::span<const SymmetrizedExample> labeled) {
  if (labeled.empty()) throw EmptyBatchError("agreement: empty labeled set");
  std::size_t hits = 0;
  for (const auto& e : labeled) hits += label_pair_majority(selectors, e.x, e.y0, e.y1).label == e.label;
  return static_cast<double>(hits) / static_cast<double>(labeled.size());
}

double swap_consistency(std::span<const Selector> selectors, std::span<const SymmetrizedExample> examples) {
  if (examples.empty()) throw EmptyBatchError("swap_consistency: empty set");
  std::size_t consistent = 0;
  for (const auto& e : examples) {
    const int forward = label_pair_majority(selectors, e.x, e.y0, e.y1).label;
    const int swapped = label_pair_majority(selectors, e.x, e.y1, e.y0).label;
    consistent += forward != swapped;
  }
  return static_cast<double>(consistent) / static_cast<double>(examples.size());
}

PairJudge selector_judge(std::span<const Selector> selectors, std::shared_ptr<const MatrixXd> vocab) {
  std::vector<Selector> owned(selectors.begin(), selectors.end());
  return [owned = std::move(owned), vocab = std::move(vocab)](const VectorXd& x, int a, int b) {
    return label_pair_majority(owned, x, vocab->row(a).transpose(), vocab->row(b).transpose()).label;
  };
}

PairJudge oracle_judge(const RewardOracle& oracle) {
  return [oracle](const VectorXd& x, int a, int b) { return oracle.reward(x, a) >= oracle.reward(x, b) ? 0 : 1; };
}

PairJudge anti_oracle_judge(const RewardOracle& oracle) {
  return [oracle](const VectorXd& x, int a, int b) { return oracle.reward(x, a) <= oracle.reward(x, b) ? 0 : 1; };
}

PairJudge random_judge(std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(derive_seed(seed, "random-judge"));
  return [rng](const VectorXd&, int, int) { return std::bernoulli_distribution(0.5)(*rng) ? 1 : 0; };
}

int pick_best(const PairJudge& judge, const VectorXd& x, std::span<const int> candidates, Tournament mode) {
  if (candidates.empty()) throw std::invalid_argument("pick_best: no candidates");
  if (mode == Tournament::kKnockout) {
    int winner = candidates[0];
    for (std::size_t k = 1; k < candidates.size(); ++k) {
      if (judge(x, winner, candidates[k]) == 1) winner = candidates[k];
    }
    return winner;
  }
  std::vector<int> wins(candidates.size(), 0);
  for (auto [j, l] : enumerate_pairs(static_cast<int>(candidates.size()))) {
    const int label = judge(x, candidates[static_cast<std::size_t>(j)], candidates[static_cast<std::size_t>(l)]);
    ++wins[static_cast<std::size_t>(label == 0 ? j : l)];
  }
  return candidates[static_cast<std::size_t>(std::max_element(wins.begin(), wins.end()) - wins.begin())];
}

std::vector<std::vector<int>> generate_candidates(const Policy& policy, std::span<const VectorXd> instructions, int n,
                                                  std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("best-of-n: n must be >= 2");
  std::vector<std::vector<int>> out;
  out.reserve(instructions.size());
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    auto rng = make_stream(seed, "bon/" + std::to_string(i));
    out.push_back(policy_sample(policy, instructions[i], n, rng));
  }
  return out;
}

double best_of_n_rating(const PairJudge& judge, const RewardOracle& oracle, std::span<const VectorXd> instructions,
                        const std::vector<std::vector<int>>& candidates, Tournament mode) {
  if (instructions.empty()) throw EmptyBatchError("best-of-n: no instructions");
  if (candidates.size() != instructions.size()) throw ShapeError("best-of-n: one candidate pool per instruction");
  double total = 0.0;
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    const int winner = pick_best(judge, instructions[i], candidates[i], mode);
    total += oracle.reward(instructions[i], winner);
  }
  return total / static_cast<double>(instructions.size());
}

std::vector<int> greedy_completions(const Policy& policy, std::span<const VectorXd> instructions) {
  std::vector<int> out;
  out.reserve(instructions.size());
  for (const auto& x : instructions) out.push_back(policy_greedy(policy, x));
  return out;
}

double win_rate(const Policy& policy, std::span<const VectorXd> instructions, std::span<const int> references,
                const RewardOracle& oracle) {
  if (instructions.empty()) throw EmptyBatchError("win_rate: no instructions");
  if (references.size() != instructions.size()) {
    throw std::invalid_argument("win_rate: missing reference for some instruction");
  }
  double score = 0.0;
  for (std::size_t i = 0; i < instructions.size(); ++i) {
    const double mine = oracle.reward(instructions[i], policy_greedy(policy, instructions[i]));
    const double ref = oracle.reward(instructions[i], references[i]);
    score += mine > ref ? 1.0 : (mine == ref ? 0.5 : 0.0);
  }
  return score / static_cast<double>(instructions.size());
}

double policy_rating(const Policy& policy, std::span<const VectorXd> instructions, const RewardOracle& oracle) {
  if (instructions.empty()) throw EmptyBatchError("policy_rating: no instructions");
  double total = 0.0;
  for (const auto& x : instructions) total += oracle.reward(x, policy_greedy(policy, x));
  return total / static_cast<double>(instructions.size());
}

double cluster_purity(std::span<const int> assignment, std::span<const int> latent) {
  if (assignment.size() != latent.size()) throw std::invalid_argument("cluster_purity: client universes differ");
  if (assignment.empty()) throw EmptyBatchError("cluster_purity: no clients");
  const int rows = *std::max_element(assignment.begin(), assignment.end()) + 1;
  const int cols = *std::max_element(latent.begin(), latent.end()) + 1;
  if (*std::min_element(assignment.begin(), assignment.end()) < 0 || *std::min_element(latent.begin(), latent.end()) < 0) {
    throw std::invalid_argument("cluster_purity: negative cluster label");
  }
  // match the smaller label set into the larger one
  const bool swap = cols > rows;
  const int small = swap ? rows : cols;
  const int large = swap ? cols : rows;
  if (small > 20) throw std::invalid_argument("cluster_purity: too many clusters for exact matching");
  std::vector<std::vector<int>> table(static_cast<std::size_t>(large), std::vector<int>(static_cast<std::size_t>(small), 0));
  for (std::size_t m = 0; m < assignment.size(); ++m) {
    const int a = swap ? latent[m] : assignment[m];
    const int b = swap ? assignment[m] : latent[m];
    ++table[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
  }
  // dp over subsets of the smaller side, scanning the larger side row by row
  const std::size_t masks = std::size_t{1} << small;
  std::vector<int> dp(masks, std::numeric_limits<int>::min());
  dp[0] = 0;
  for (int r = 0; r < large; ++r) {
    auto next = dp;
    for (std::size_t mask = 0; mask < masks; ++mask) {
      if (dp[mask] == std::numeric_limits<int>::min()) continue;
      for (int c = 0; c < small; ++c) {
        if (mask & (std::size_t{1} << c)) continue;
        const auto to = mask | (std::size_t{1} << c);
        next[to] = std::max(next[to], dp[mask] + table[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]);
      }
    }
    dp = std::move(next);
  }
  return static_cast<double>(*std::max_element(dp.begin(), dp.end())) / static_cast<double>(assignment.size());
}

HackingCurve hacking_curve(std::span<const double> series, int window, double relative_margin) {
  if (series.size() < 2) throw std::invalid_argument("hacking_curve: need at least two points");
  if (window < 1) throw std::invalid_argument("hacking_curve: window must be >= 1");
  HackingCurve out;
  out.best_index = static_cast<int>(std::max_element(series.begin(), series.end()) - series.begin());
  out.best_value = series[static_cast<std::size_t>(out.best_index)];
  const double margin = out.best_value == 0.0 ? relative_margin : relative_margin * std::abs(out.best_value);
  for (std::size_t t = static_cast<std::size_t>(out.best_index) + 1; t < series.size(); ++t) {
    const std::size_t lo = t + 1 >= static_cast<std::size_t>(window) ? t + 1 - static_cast<std::size_t>(window) : 0;
    double sum = 0.0;
    for (std::size_t k = lo; k <= t; ++k) sum += series[k];
    const double smoothed = sum / static_cast<double>(t - lo + 1);
    if (smoothed < out.best_value - margin) {
      out.inflection = true;
      out.inflection_index = static_cast<int>(t);
      break;
    }
  }
  return out;
}

}  // namespace fedrlhf
