#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace pzero {

using NodeId = std::int32_t;
using Edge = std::pair<NodeId, NodeId>;

/// Provenance recorded alongside a graph when it is serialized.
struct GraphMeta {
  std::string generator = "unknown";
  nlohmann::json params = nlohmann::json::object();
  std::uint64_t seed = 0;
};

/// Immutable undirected simple graph in compressed-row form. Each edge is
/// stored in both directions; neighbors of a node are sorted ascending.
class Graph {
 public:
  Graph() = default;

  /// Builds from an undirected edge list. Self-loops and duplicates throw;
  /// use load_edge_list() for lenient ingestion.
  static Graph from_edges(NodeId n, std::span<const Edge> edges, GraphMeta meta = {});

  NodeId num_nodes() const noexcept { return n_; }
  std::size_t num_edges() const noexcept { return col_indices_.size() / 2; }
  std::size_t num_directed_edges() const noexcept { return col_indices_.size(); }

  NodeId degree(NodeId i) const noexcept { return static_cast<NodeId>(row_offsets_[i + 1] - row_offsets_[i]); }
  std::span<const NodeId> neighbors(NodeId i) const noexcept {
    return {col_indices_.data() + row_offsets_[i], static_cast<std::size_t>(degree(i))};
  }
  NodeId max_degree() const noexcept;
  bool has_edge(NodeId i, NodeId j) const noexcept;

  std::span<const std::int64_t> row_offsets() const noexcept { return row_offsets_; }
  std::span<const NodeId> col_indices() const noexcept { return col_indices_; }

  /// Index of the directed edge j->i for each directed edge i->j.
  std::span<const std::int64_t> reverse_edges() const noexcept { return reverse_; }

  /// Undirected edges with i < j, in ascending order.
  std::vector<Edge> edges() const;

  const GraphMeta& meta() const noexcept { return meta_; }

  /// Dense adjacency, intended for small-graph checks.
  Eigen::MatrixXd dense_adjacency() const;

 private:
  NodeId n_ = 0;
  std::vector<std::int64_t> row_offsets_{0};
  std::vector<NodeId> col_indices_;
  std::vector<std::int64_t> reverse_;
  GraphMeta meta_;
};

// ---------------------------------------------------------------------------
// Generators. Identical arguments always yield identical edge sets.

Graph generate_er(NodeId n, double p, std::uint64_t seed, bool require_connected);
Graph generate_ba(NodeId n, NodeId m, std::uint64_t seed);
Graph generate_rgg(NodeId n, double radius, std::uint64_t seed, bool require_connected);

/// Geometric graph over a given point set (rows are 2-D points).
Graph rgg_from_points(const Eigen::MatrixX2d& points, double radius);

/// Radius at which the seed's point set yields the edge count closest to
/// target_edges, found by bisection.
double tune_rgg_radius(NodeId n, std::size_t target_edges, std::uint64_t seed);

/// Number of connectivity attempts made by the *_connected generators.
inline constexpr int kMaxConnectAttempts = 1000;

// ---------------------------------------------------------------------------
// Ingestion and serialization.

struct EdgeListReport {
  Graph graph;
  std::size_t duplicates = 0;
  std::size_t self_loops = 0;
  /// original_ids[k] is the id in the file of compacted node k.
  std::vector<std::int64_t> original_ids;
};

/// Whitespace-separated integer pairs, one per line, '#' comments allowed.
EdgeListReport parse_edge_list(std::string_view text);
EdgeListReport load_edge_list(const std::string& path);
void write_edge_list(const Graph& g, const std::string& path);

nlohmann::json to_json(const Graph& g);
Graph graph_from_json(const nlohmann::json& j);
void save_graph(const Graph& g, const std::string& path);
Graph load_graph(const std::string& path);

// ---------------------------------------------------------------------------
// Metrics.

/// Hop distances from source; -1 marks unreachable nodes.
std::vector<NodeId> bfs_distances(const Graph& g, NodeId source);
bool is_connected(const Graph& g);
std::size_t count_components(const Graph& g);
NodeId diameter(const Graph& g);

/// Largest adjacency eigenvalue by shifted power iteration from the all-ones
/// vector. Stops once the eigen-residual certifies |estimate - lambda_1| <=
/// tol * estimate.
double leading_eigenvalue(const Graph& g, double tol = 1e-10, int max_iter = 100000);

/// Groups nodes by their reachability signature (n_i^(1), ..., n_i^(l_max)),
/// where n_i^(l) counts the nodes at hop distance 1..l. With restrict_to, the
/// signatures are computed on the induced subgraph and the remaining nodes
/// get class -1. Class ids are assigned in order of first appearance.
std::vector<int> equivalence_classes(const Graph& g, std::optional<std::span<const NodeId>> restrict_to, int l_max);

/// Per-node reachability signature, one row per node.
std::vector<std::vector<NodeId>> reach_signatures(const Graph& g, std::optional<std::span<const NodeId>> restrict_to,
                                                  int l_max);

/// Induced subgraph on the given nodes (relabelled 0..k-1 in given order).
Graph induced_subgraph(const Graph& g, std::span<const NodeId> nodes);

// ---------------------------------------------------------------------------
// Propagation rules f(A) for graph convolutions.

enum class PropagationRule { Symmetric, RandomWalk, Mixture };

std::string to_string(PropagationRule rule);
PropagationRule propagation_rule_from_string(const std::string& name);

/// Output width multiplier of a rule (Mixture concatenates two channels).
constexpr int rule_width(PropagationRule rule) noexcept { return rule == PropagationRule::Mixture ? 2 : 1; }

namespace detail {

template <typename Scalar>
inline Scalar inv_sqrt_degree(const Graph& g, NodeId i) {
  const NodeId d = g.degree(i);
  return d > 0 ? Scalar(1) / std::sqrt(Scalar(d)) : Scalar(0);
}

// out.row(i) = sum_j w(i, j) * h.row(j) over neighbors j of i.
template <typename Weight, typename Derived, typename Out>
void neighbor_sum(const Graph& g, const Eigen::MatrixBase<Derived>& h, Out&& out, Weight weight) {
  for (NodeId i = 0; i < g.num_nodes(); ++i) {
    auto row = out.row(i);
    row.setZero();
    for (NodeId j : g.neighbors(i)) row += weight(i, j) * h.row(j);
  }
}

}  // namespace detail

/// f(A) * h, with node features stored one row per node. Degree-0 nodes get
/// all-zero rows.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> propagate(
    const Graph& g, PropagationRule rule, const Eigen::MatrixBase<Derived>& h) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index c = h.cols();
  Mat out(h.rows(), c * rule_width(rule));
  auto sym = [&](NodeId i, NodeId j) { return detail::inv_sqrt_degree<Scalar>(g, i) * detail::inv_sqrt_degree<Scalar>(g, j); };
  switch (rule) {
    case PropagationRule::Symmetric:
      detail::neighbor_sum(g, h, out, sym);
      break;
    case PropagationRule::RandomWalk:
      detail::neighbor_sum(g, h, out, [&](NodeId i, NodeId) { return Scalar(1) / Scalar(g.degree(i)); });
      break;
    case PropagationRule::Mixture:
      detail::neighbor_sum(g, h, out.leftCols(c), [](NodeId, NodeId) { return Scalar(1); });
      detail::neighbor_sum(g, h, out.rightCols(c), sym);
      break;
  }
  return out;
}

/// f(A)^T * h; the adjoint of propagate(), used for backpropagation. The input
/// has rule_width(rule) * C columns and the output C columns.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> propagate_transpose(
    const Graph& g, PropagationRule rule, const Eigen::MatrixBase<Derived>& h) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  switch (rule) {
    case PropagationRule::Symmetric:
      return propagate(g, rule, h);
    case PropagationRule::RandomWalk: {
      // (D^-1 A)^T = A D^-1
      Mat out(h.rows(), h.cols());
      detail::neighbor_sum(g, h, out, [&](NodeId, NodeId j) { return Scalar(1) / Scalar(g.degree(j)); });
      return out;
    }
    case PropagationRule::Mixture: {
      const Eigen::Index c = h.cols() / 2;
      Mat left(h.rows(), c), right(h.rows(), c);
      detail::neighbor_sum(g, h.leftCols(c), left, [](NodeId, NodeId) { return Scalar(1); });
      right = propagate(g, PropagationRule::Symmetric, h.rightCols(c));
      return left + right;
    }
  }
  return Mat();
}

/// f(A) as a sparse matrix (for Mixture, the horizontal block [A | Sym] is
/// not square, so only Symmetric and RandomWalk are accepted).
Eigen::SparseMatrix<double> propagation_matrix(const Graph& g, PropagationRule rule);

}  // namespace pzero
