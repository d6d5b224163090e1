#pragma once

#include "pzero/graph.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

namespace pzero {

/// Per-node source scores (log-likelihoods, logits, centralities). Higher is
/// better; -inf marks impossible candidates. Ties always go to the smaller
/// node id.
class SourceScores {
 public:
  SourceScores() = default;
  explicit SourceScores(Eigen::VectorXd values) : values_(std::move(values)) {}
  explicit SourceScores(NodeId n, double fill = -std::numeric_limits<double>::infinity())
      : values_(Eigen::VectorXd::Constant(n, fill)) {}

  NodeId size() const noexcept { return static_cast<NodeId>(values_.size()); }
  double operator[](NodeId i) const { return values_[i]; }
  double& operator[](NodeId i) { return values_[i]; }
  const Eigen::VectorXd& values() const noexcept { return values_; }

  /// True when a ranks ahead of b.
  bool ahead(NodeId a, NodeId b) const noexcept {
    return values_[a] > values_[b] || (values_[a] == values_[b] && a < b);
  }

  NodeId argmax() const noexcept {
    NodeId best = 0;
    for (NodeId i = 1; i < size(); ++i)
      if (ahead(i, best)) best = i;
    return best;
  }

  /// 0-based position of node in the descending order.
  NodeId rank_of(NodeId node) const noexcept {
    NodeId r = 0;
    for (NodeId i = 0; i < size(); ++i) r += ahead(i, node);
    return r;
  }

  /// Nodes in descending order; the first k when k >= 0.
  std::vector<NodeId> ranking(NodeId k = -1) const {
    std::vector<NodeId> order(static_cast<std::size_t>(size()));
    std::iota(order.begin(), order.end(), 0);
    const auto cmp = [this](NodeId a, NodeId b) { return ahead(a, b); };
    if (k >= 0 && k < size()) {
      std::partial_sort(order.begin(), order.begin() + k, order.end(), cmp);
      order.resize(static_cast<std::size_t>(k));
    } else {
      std::sort(order.begin(), order.end(), cmp);
    }
    return order;
  }

 private:
  Eigen::VectorXd values_;
};

}  // namespace pzero
