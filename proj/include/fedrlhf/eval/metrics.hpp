#pragma once

#include "fedrlhf/biscuit/grouping.hpp"
#include "fedrlhf/core/policy.hpp"
#include "fedrlhf/core/selector.hpp"
#include "fedrlhf/data/world.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace fedrlhf {

struct EvalReport {
  std::string metric;
  double value = 0.0;
  std::size_t n = 0;
  std::string config_digest;
  std::vector<std::pair<int, double>> series;  // (round, value) where applicable
};

// Fraction of examples whose (majority-voted) label equals the reference label.
double agreement(std::span<const Selector> selectors, std::span<const SymmetrizedExample> labeled);

// Fraction of examples whose (majority-voted) label flips when the two
// completions are swapped.
double swap_consistency(std::span<const Selector> selectors, std::span<const SymmetrizedExample> examples);

// Judges a pair of completion ids for prompt x: 0 prefers `a`, 1 prefers `b`.
using PairJudge = std::function<int(const VectorXd& x, int a, int b)>;

PairJudge selector_judge(std::span<const Selector> selectors, std::shared_ptr<const MatrixXd> vocab);
PairJudge oracle_judge(const RewardOracle& oracle);   // prefers the higher mean reward
PairJudge anti_oracle_judge(const RewardOracle& oracle);
PairJudge random_judge(std::uint64_t seed);

enum class Tournament { kKnockout, kRoundRobin };

// Winner among `candidates`. Knockout: the running winner meets each next
// candidate in index order. Round robin: most pairwise wins, ties -> lower index.
int pick_best(const PairJudge& judge, const VectorXd& x, std::span<const int> candidates, Tournament mode);

// Candidate pools: n completions per instruction from the policy at its
// temperature; instruction i draws from the stream "bon/<i>", so the first n'
// candidates are shared by every n >= n'.
std::vector<std::vector<int>> generate_candidates(const Policy& policy, std::span<const VectorXd> instructions, int n,
                                                  std::uint64_t seed);

// Mean oracle reward (population mean) of the judge's winners.
double best_of_n_rating(const PairJudge& judge, const RewardOracle& oracle, std::span<const VectorXd> instructions,
                        const std::vector<std::vector<int>>& candidates, Tournament mode = Tournament::kKnockout);

// Fraction of instructions where the policy's greedy completion has strictly
// higher oracle reward than the reference completion; exact ties count 1/2.
double win_rate(const Policy& policy, std::span<const VectorXd> instructions, std::span<const int> references,
                const RewardOracle& oracle);

// Mean oracle reward of the policy's greedy completions.
double policy_rating(const Policy& policy, std::span<const VectorXd> instructions, const RewardOracle& oracle);

std::vector<int> greedy_completions(const Policy& policy, std::span<const VectorXd> instructions);

// Best-permutation accuracy between produced and latent cluster labels.
double cluster_purity(std::span<const int> assignment, std::span<const int> latent);

struct HackingCurve {
  int best_index = 0;
  double best_value = 0.0;
  bool inflection = false;
  int inflection_index = -1;  // first index whose smoothed value fell below the margin
};

// Trailing-window smoothing; an inflection is flagged when some smoothed value
// after the peak drops below best - margin * |best| (margin is absolute when
// best == 0).
HackingCurve hacking_curve(std::span<const double> series, int window = 3, double relative_margin = 0.01);

}  // namespace fedrlhf
