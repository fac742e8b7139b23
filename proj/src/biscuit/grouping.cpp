#include "fedrlhf/biscuit/grouping.hpp"

#include "fedrlhf/core/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace fedrlhf {

ClusterAssignment ClusterAssignment::from_labels(std::vector<int> labels, int num_selectors) {
  ClusterAssignment a;
  a.members.resize(static_cast<std::size_t>(num_selectors));
  for (std::size_t m = 0; m < labels.size(); ++m) {
    const int u = labels[m];
    if (u < 0 || u >= num_selectors) throw IndexError("assignment: selector index out of range");
    a.members[static_cast<std::size_t>(u)].push_back(static_cast<int>(m));
  }
  a.selector_of = std::move(labels);
  return a;
}

MatrixXd compute_validation_losses(std::span<const Selector> selectors, std::span<const ClientDataset> clients,
                                   int threads) {
  MatrixXd losses(static_cast<Eigen::Index>(clients.size()), static_cast<Eigen::Index>(selectors.size()));
  parallel_for(clients.size(), threads, [&](std::size_t m) {
    for (std::size_t u = 0; u < selectors.size(); ++u) {
      losses(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(u)) =
          clients[m].val.empty() ? std::numeric_limits<double>::quiet_NaN()
                                 : selector_ce_loss(selectors[u], std::span(clients[m].val));
    }
  });
  return losses;
}

namespace {

// Lowest-loss open cluster for client m, skipping `exclude`; ties -> lower index.
int best_open(const MatrixXd& losses, Eigen::Index m, const std::vector<bool>& closed, int exclude) {
  int best = -1;
  for (int u = 0; u < losses.cols(); ++u) {
    if (closed[static_cast<std::size_t>(u)] || u == exclude) continue;
    if (best < 0 || losses(m, u) < losses(m, best)) best = u;
  }
  return best;
}

}  // namespace

ClusterAssignment greedy_cluster_balanced(const MatrixXd& losses, int num_selectors) {
  const int num_clients = static_cast<int>(losses.rows());
  if (num_selectors < 1) throw std::invalid_argument("grouping: need at least one selector");
  require_dim(losses.cols(), num_selectors, "grouping: loss matrix columns");
  if (num_clients < num_selectors) {
    throw InfeasibleBalanceError("grouping: " + std::to_string(num_clients) + " clients cannot fill " +
                                 std::to_string(num_selectors) + " balanced clusters");
  }
  const auto u_count = static_cast<std::size_t>(num_selectors);

  std::vector<int> valid, fallback;
  for (int m = 0; m < num_clients; ++m) (losses.row(m).allFinite() ? valid : fallback).push_back(m);

  std::vector<int> label(static_cast<std::size_t>(num_clients), -1);
  std::vector<bool> closed(u_count, false);
  for (int m : valid) label[static_cast<std::size_t>(m)] = best_open(losses, m, closed, -1);

  const int n_valid = static_cast<int>(valid.size());
  const int small_cap = n_valid / num_selectors;
  int large_left = n_valid % num_selectors;
  std::vector<int> finalize_order;

  for (std::size_t step = 0; step < u_count; ++step) {
    std::vector<int> count(u_count, 0);
    for (int m : valid) ++count[static_cast<std::size_t>(label[static_cast<std::size_t>(m)])];
    int target = -1;
    for (int u = 0; u < num_selectors; ++u) {
      if (closed[static_cast<std::size_t>(u)]) continue;
      if (target < 0 || count[static_cast<std::size_t>(u)] > count[static_cast<std::size_t>(target)]) target = u;
    }
    const int cap = large_left > 0 ? small_cap + 1 : small_cap;
    if (large_left > 0) --large_left;

    std::vector<int> in_target;
    for (int m : valid) {
      if (label[static_cast<std::size_t>(m)] == target) in_target.push_back(m);
    }
    std::stable_sort(in_target.begin(), in_target.end(),
                     [&](int a, int b) { return losses(a, target) < losses(b, target); });
    closed[static_cast<std::size_t>(target)] = true;
    finalize_order.push_back(target);
    for (std::size_t i = static_cast<std::size_t>(cap); i < in_target.size(); ++i) {
      const int m = in_target[i];
      label[static_cast<std::size_t>(m)] = best_open(losses, m, closed, target);
    }
  }

  std::vector<int> size(u_count, 0);
  for (int m : valid) ++size[static_cast<std::size_t>(label[static_cast<std::size_t>(m)])];
  for (int m : fallback) {
    const auto smallest = static_cast<int>(std::min_element(size.begin(), size.end()) - size.begin());
    label[static_cast<std::size_t>(m)] = smallest;
    ++size[static_cast<std::size_t>(smallest)];
  }

  auto assignment = ClusterAssignment::from_labels(std::move(label), num_selectors);
  assignment.finalize_order = std::move(finalize_order);
  return assignment;
}

void validate_assignment(const ClusterAssignment& assignment, int num_clients, int num_selectors) {
  if (assignment.num_clients() != num_clients || assignment.num_selectors() != num_selectors) {
    throw std::logic_error("assignment: wrong client or selector count");
  }
  std::vector<int> seen(static_cast<std::size_t>(num_clients), 0);
  std::size_t min_size = std::numeric_limits<std::size_t>::max(), max_size = 0;
  for (int u = 0; u < num_selectors; ++u) {
    const auto& mem = assignment.members[static_cast<std::size_t>(u)];
    min_size = std::min(min_size, mem.size());
    max_size = std::max(max_size, mem.size());
    for (int m : mem) {
      if (m < 0 || m >= num_clients) throw std::logic_error("assignment: member id out of range");
      if (assignment.selector_of[static_cast<std::size_t>(m)] != u) throw std::logic_error("assignment: inconsistent maps");
      ++seen[static_cast<std::size_t>(m)];
    }
  }
  for (int s : seen) {
    if (s != 1) throw std::logic_error("assignment: clusters do not form a disjoint cover");
  }
  if (max_size - min_size > 1) throw std::logic_error("assignment: cluster sizes differ by more than one");
}

bool displacement_sound(const ClusterAssignment& assignment, const MatrixXd& losses) {
  const auto& order = assignment.finalize_order;
  if (static_cast<int>(order.size()) != assignment.num_selectors()) return false;
  std::vector<int> position(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) position[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
  for (int m = 0; m < assignment.num_clients(); ++m) {
    if (!losses.row(m).allFinite()) continue;
    const int u = assignment.selector_of[static_cast<std::size_t>(m)];
    for (int v = 0; v < assignment.num_selectors(); ++v) {
      if (losses(m, v) < losses(m, u) && position[static_cast<std::size_t>(v)] >= position[static_cast<std::size_t>(u)]) {
        return false;
      }
    }
  }
  return true;
}

double assignment_objective(const ClusterAssignment& assignment, const MatrixXd& losses) {
  double total = 0.0;
  for (int m = 0; m < assignment.num_clients(); ++m) total += losses(m, assignment.selector_of[static_cast<std::size_t>(m)]);
  return total;
}

}  // namespace fedrlhf
