#pragma once

#include "fedrlhf/core/selector.hpp"
#include "fedrlhf/data/preference.hpp"

#include <span>
#include <stdexcept>
#include <vector>

namespace fedrlhf {

struct InfeasibleBalanceError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ClusterAssignment {
  std::vector<int> selector_of;           // client -> selector index
  std::vector<std::vector<int>> members;  // selector -> ascending client ids
  // Order in which clusters were capped by the balancing pass; empty for
  // assignments not produced by greedy_cluster_balanced.
  std::vector<int> finalize_order;

  int num_clients() const { return static_cast<int>(selector_of.size()); }
  int num_selectors() const { return static_cast<int>(members.size()); }

  static ClusterAssignment from_labels(std::vector<int> labels, int num_selectors);
};

// L[m][u]: mean CE of selector u on client m's validation set. Rows of clients
// without validation data are NaN.
MatrixXd compute_validation_losses(std::span<const Selector> selectors, std::span<const ClientDataset> clients,
                                   int threads = 1);

// Greedy argmin assignment followed by capping: repeatedly take the most
// populated open cluster (ties: lower index), cap it at its capacity keeping
// the lowest-loss members (ties: lower client id), and move the displaced
// clients to their best remaining open cluster. (M mod U) clusters get
// ceil(M/U) slots, handed out in capping order; the rest get floor(M/U).
// Rows containing non-finite losses are placed afterwards, each into the
// currently smallest cluster.
ClusterAssignment greedy_cluster_balanced(const MatrixXd& losses, int num_selectors);

// Cover, disjointness and the max-min <= 1 balance gap; throws on violation.
void validate_assignment(const ClusterAssignment& assignment, int num_clients, int num_selectors);

// Every client sitting outside its argmin cluster has each strictly better
// cluster capped before its own. Requires finalize_order.
bool displacement_sound(const ClusterAssignment& assignment, const MatrixXd& losses);

double assignment_objective(const ClusterAssignment& assignment, const MatrixXd& losses);

}  // namespace fedrlhf
