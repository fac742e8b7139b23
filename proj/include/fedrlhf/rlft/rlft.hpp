#pragma once

#include "fedrlhf/core/optimizer.hpp"
#include "fedrlhf/core/policy.hpp"
#include "fedrlhf/core/selector.hpp"

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace fedrlhf {

// All (j, l) with 0 <= j < l < n in lexicographic order.
std::vector<std::pair<int, int>> enumerate_pairs(int n);

// 0 when logit 0 is strictly greater than logit 1, otherwise 1.
template <typename DX, typename DA, typename DB>
int label_pair_single(const Selector& selector, const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DA>& first,
                      const Eigen::MatrixBase<DB>& second) {
  const auto logits = selector_forward(selector, x, first, second);
  return logits[0] > logits[1] ? 0 : 1;
}

struct MajorityLabel {
  int label = 1;
  std::vector<int> votes;
};

// Each selector votes with label_pair_single; label 0 needs strictly more
// zero-votes than one-votes, so even-sized ties resolve to 1.
MajorityLabel label_pair_majority(std::span<const Selector> selectors, const VectorXd& x, const VectorXd& first,
                                  const VectorXd& second);

struct GeneratedPreferenceRecord {
  std::size_t instruction = 0;
  VectorXd x;
  int y0 = 0;  // completion ids
  int y1 = 0;
  int label = 1;
  std::vector<int> votes;
};

using GeneratedPreferenceDataset = std::vector<GeneratedPreferenceRecord>;

// For every instruction, n completions from theta_0 at temperature 1.0, then
// every index pair (j < l) labeled by majority vote of the selectors.
// Instruction i samples from the stream "gen/<i>".
GeneratedPreferenceDataset build_generated_dataset(const Policy& reference, std::span<const Selector> selectors,
                                                   std::span<const VectorXd> instructions, int n, std::uint64_t seed,
                                                   int threads = 1);

struct DPOConfig {
  double beta = 0.1;
  int steps = 500;  // T
  int batch_size = 32;
  OptimizerSpec optimizer{OptimizerKind::kRmsProp, 1e-6, 0.9, 0.95, 1e-8, 0.0, 0.99};
  std::uint64_t seed = 0;

  void validate() const;
};

// -log sigmoid(beta * [(log pi(y_w) - log pi0(y_w)) - (log pi(y_l) - log pi0(y_l))])
// with y_w = y_label.
double dpo_loss(const Policy& policy, const Policy& reference, const GeneratedPreferenceRecord& record, double beta);

// Mean-over-batch gradient of dpo_loss w.r.t. the policy parameters only.
ParamVector dpo_grad(const Policy& policy, const Policy& reference, std::span<const GeneratedPreferenceRecord> batch,
                     double beta);

double dpo_batch_loss(const Policy& policy, const Policy& reference, std::span<const GeneratedPreferenceRecord> batch,
                      double beta);

// T optimizer steps from theta = theta_0 on batches drawn uniformly with
// replacement. `reference` is never modified.
Policy dpo_train(const Policy& reference, const GeneratedPreferenceDataset& dataset, const DPOConfig& config);

}  // namespace fedrlhf
