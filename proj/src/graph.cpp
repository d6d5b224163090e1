#include "pzero/graph.hpp"

#include "pzero/errors.hpp"
#include "pzero/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace pzero {

Graph Graph::from_edges(NodeId n, std::span<const Edge> edges, GraphMeta meta) {
  if (n < 0) throw std::invalid_argument("graph: negative node count");
  Graph g;
  g.n_ = n;
  g.meta_ = std::move(meta);
  std::vector<std::int64_t> counts(static_cast<std::size_t>(n) + 1, 0);
  for (auto [i, j] : edges) {
    if (i < 0 || j < 0 || i >= n || j >= n)
      throw std::invalid_argument("graph: edge (" + std::to_string(i) + "," + std::to_string(j) + ") out of range");
    if (i == j) throw std::invalid_argument("graph: self-loop at node " + std::to_string(i));
    ++counts[i + 1];
    ++counts[j + 1];
  }
  std::partial_sum(counts.begin(), counts.end(), counts.begin());
  g.row_offsets_ = counts;
  g.col_indices_.resize(static_cast<std::size_t>(counts.back()));
  std::vector<std::int64_t> cursor(counts.begin(), counts.end() - 1);
  for (auto [i, j] : edges) {
    g.col_indices_[cursor[i]++] = j;
    g.col_indices_[cursor[j]++] = i;
  }
  for (NodeId i = 0; i < n; ++i) {
    auto first = g.col_indices_.begin() + g.row_offsets_[i];
    auto last = g.col_indices_.begin() + g.row_offsets_[i + 1];
    std::sort(first, last);
    if (std::adjacent_find(first, last) != last)
      throw std::invalid_argument("graph: duplicate edge at node " + std::to_string(i));
  }
  g.reverse_.resize(g.col_indices_.size());
  for (NodeId i = 0; i < n; ++i) {
    for (std::int64_t e = g.row_offsets_[i]; e < g.row_offsets_[i + 1]; ++e) {
      const NodeId j = g.col_indices_[e];
      auto first = g.col_indices_.begin() + g.row_offsets_[j];
      auto last = g.col_indices_.begin() + g.row_offsets_[j + 1];
      g.reverse_[e] = std::lower_bound(first, last, i) - g.col_indices_.begin();
    }
  }
  return g;
}

NodeId Graph::max_degree() const noexcept {
  NodeId d = 0;
  for (NodeId i = 0; i < n_; ++i) d = std::max(d, degree(i));
  return d;
}

bool Graph::has_edge(NodeId i, NodeId j) const noexcept {
  auto nb = neighbors(i);
  return std::binary_search(nb.begin(), nb.end(), j);
}

std::vector<Edge> Graph::edges() const {
  std::vector<Edge> out;
  out.reserve(num_edges());
  for (NodeId i = 0; i < n_; ++i)
    for (NodeId j : neighbors(i))
      if (i < j) out.emplace_back(i, j);
  return out;
}

Eigen::MatrixXd Graph::dense_adjacency() const {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n_, n_);
  for (NodeId i = 0; i < n_; ++i)
    for (NodeId j : neighbors(i)) a(i, j) = 1.0;
  return a;
}

// ---------------------------------------------------------------------------

namespace {

template <typename Make>
Graph retry_until_connected(std::uint64_t seed, bool require_connected, const char* name, Make make) {
  if (!require_connected) return make(seed);
  for (int attempt = 0; attempt < kMaxConnectAttempts; ++attempt) {
    Graph g = make(seed + static_cast<std::uint64_t>(attempt));
    if (is_connected(g)) return g;
  }
  throw std::runtime_error(std::string(name) + ": no connected instance after " + std::to_string(kMaxConnectAttempts) +
                           " attempts (seeds " + std::to_string(seed) + ".." +
                           std::to_string(seed + kMaxConnectAttempts - 1) + ")");
}

Eigen::MatrixX2d unit_square_points(NodeId n, std::uint64_t seed) {
  Rng rng(hash_words(seed, {0x524747ULL}));
  Eigen::MatrixX2d pts(n, 2);
  for (NodeId i = 0; i < n; ++i) {
    pts(i, 0) = rng.uniform();
    pts(i, 1) = rng.uniform();
  }
  return pts;
}

}  // namespace

Graph generate_er(NodeId n, double p, std::uint64_t seed, bool require_connected) {
  if (n < 2) throw std::invalid_argument("generate_er: n must be >= 2");
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("generate_er: p must lie in (0, 1]");
  if (require_connected && p < 2.0 * std::log(n) / n)
    std::clog << "warning: generate_er: p=" << p << " is below 2 ln(n)/n; connectivity retries may be exhausted\n";
  return retry_until_connected(seed, require_connected, "generate_er", [&](std::uint64_t s) {
    Rng rng(hash_words(s, {0x4552ULL}));
    std::vector<Edge> edges;
    for (NodeId i = 0; i < n; ++i)
      for (NodeId j = i + 1; j < n; ++j)
        if (rng.uniform() < p) edges.emplace_back(i, j);
    return Graph::from_edges(n, edges,
                             {"er", {{"n", n}, {"p", p}, {"require_connected", require_connected}}, s});
  });
}

Graph generate_ba(NodeId n, NodeId m, std::uint64_t seed) {
  if (m < 1 || m >= n) throw std::invalid_argument("generate_ba: require 1 <= m < n");
  Rng rng(hash_words(seed, {0x4241ULL}));
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(m) * (n - m));
  // Start from m isolated nodes; each new node attaches to m distinct targets
  // drawn proportionally to degree (via the repeated-node urn).
  std::vector<NodeId> targets(m);
  std::iota(targets.begin(), targets.end(), 0);
  std::vector<NodeId> urn;
  for (NodeId source = m; source < n; ++source) {
    for (NodeId t : targets) edges.emplace_back(std::min(source, t), std::max(source, t));
    urn.insert(urn.end(), targets.begin(), targets.end());
    urn.insert(urn.end(), static_cast<std::size_t>(m), source);
    std::vector<NodeId> next;
    while (static_cast<NodeId>(next.size()) < m) {
      const NodeId pick = urn[rng.below(urn.size())];
      if (std::find(next.begin(), next.end(), pick) == next.end()) next.push_back(pick);
    }
    targets = std::move(next);
  }
  return Graph::from_edges(n, edges, {"ba", {{"n", n}, {"m", m}}, seed});
}

Graph rgg_from_points(const Eigen::MatrixX2d& points, double radius) {
  const auto n = static_cast<NodeId>(points.rows());
  const double r2 = radius * radius;
  std::vector<Edge> edges;
  for (NodeId i = 0; i < n; ++i)
    for (NodeId j = i + 1; j < n; ++j)
      if ((points.row(i) - points.row(j)).squaredNorm() <= r2) edges.emplace_back(i, j);
  return Graph::from_edges(n, edges, {"rgg", {{"n", n}, {"radius", radius}}, 0});
}

Graph generate_rgg(NodeId n, double radius, std::uint64_t seed, bool require_connected) {
  if (n < 2) throw std::invalid_argument("generate_rgg: n must be >= 2");
  if (!(radius > 0.0 && radius < 1.0)) throw std::invalid_argument("generate_rgg: radius must lie in (0, 1)");
  return retry_until_connected(seed, require_connected, "generate_rgg", [&](std::uint64_t s) {
    Graph g = rgg_from_points(unit_square_points(n, s), radius);
    auto edges = g.edges();
    return Graph::from_edges(n, edges,
                             {"rgg", {{"n", n}, {"radius", radius}, {"require_connected", require_connected}}, s});
  });
}

double tune_rgg_radius(NodeId n, std::size_t target_edges, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("tune_rgg_radius: n must be >= 2");
  const auto pts = unit_square_points(n, seed);
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (NodeId i = 0; i < n; ++i)
    for (NodeId j = i + 1; j < n; ++j) d.push_back((pts.row(i) - pts.row(j)).norm());
  if (target_edges == 0 || target_edges > d.size())
    throw std::invalid_argument("tune_rgg_radius: target edge count out of range");
  std::sort(d.begin(), d.end());
  // Bisect on the radius; the edge count is the number of distances <= r.
  double lo = 0.0, hi = std::sqrt(2.0);
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    const auto count = static_cast<std::size_t>(std::upper_bound(d.begin(), d.end(), mid) - d.begin());
    (count >= target_edges ? hi : lo) = mid;
  }
  return hi;
}

// ---------------------------------------------------------------------------

EdgeListReport parse_edge_list(std::string_view text) {
  EdgeListReport report;
  std::unordered_map<std::int64_t, NodeId> ids;
  std::vector<Edge> edges;
  std::unordered_set<std::uint64_t> seen;
  auto intern = [&](std::int64_t raw) {
    auto [it, inserted] = ids.emplace(raw, static_cast<NodeId>(ids.size()));
    if (inserted) report.original_ids.push_back(raw);
    return it->second;
  };

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);

    std::int64_t tok[2];
    int count = 0;
    std::size_t k = 0;
    while (k < line.size()) {
      while (k < line.size() && std::isspace(static_cast<unsigned char>(line[k]))) ++k;
      if (k >= line.size()) break;
      std::size_t stop = k;
      while (stop < line.size() && !std::isspace(static_cast<unsigned char>(line[stop]))) ++stop;
      const std::string_view word = line.substr(k, stop - k);
      std::int64_t value = 0;
      auto [ptr, ec] = std::from_chars(word.data(), word.data() + word.size(), value);
      if (ec != std::errc() || ptr != word.data() + word.size())
        throw ParseError("expected integer node id, got '" + std::string(word) + "'", line_no);
      if (count == 2) throw ParseError("more than two tokens on an edge line", line_no);
      tok[count++] = value;
      k = stop;
    }
    if (count == 0) continue;
    if (count == 1) throw ParseError("edge line needs two node ids", line_no);

    const NodeId a = intern(tok[0]);
    const NodeId b = intern(tok[1]);
    if (a == b) {
      ++report.self_loops;
      continue;
    }
    const auto lo = static_cast<std::uint64_t>(std::min(a, b));
    const auto hi = static_cast<std::uint64_t>(std::max(a, b));
    if (!seen.insert((lo << 32) | hi).second) {
      ++report.duplicates;
      continue;
    }
    edges.emplace_back(static_cast<NodeId>(lo), static_cast<NodeId>(hi));
  }
  if (ids.empty()) throw ParseError("edge list contains no edges", line_no);
  report.graph = Graph::from_edges(static_cast<NodeId>(ids.size()), edges,
                                   {"edgelist",
                                    {{"duplicates", report.duplicates}, {"self_loops", report.self_loops}},
                                    0});
  return report;
}

EdgeListReport load_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open edge list '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_edge_list(ss.str());
}

void write_edge_list(const Graph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  for (auto [i, j] : g.edges()) out << i << ' ' << j << '\n';
}

nlohmann::json to_json(const Graph& g) {
  nlohmann::json edges = nlohmann::json::array();
  for (auto [i, j] : g.edges()) edges.push_back({i, j});
  return {{"n", g.num_nodes()},
          {"edges", std::move(edges)},
          {"meta", {{"generator", g.meta().generator}, {"params", g.meta().params}, {"seed", g.meta().seed}}}};
}

Graph graph_from_json(const nlohmann::json& j) {
  if (!j.contains("n") || !j.contains("edges")) throw std::invalid_argument("graph JSON: missing 'n' or 'edges'");
  std::vector<Edge> edges;
  for (const auto& e : j.at("edges")) edges.emplace_back(e.at(0).get<NodeId>(), e.at(1).get<NodeId>());
  GraphMeta meta;
  if (j.contains("meta")) {
    const auto& m = j.at("meta");
    meta.generator = m.value("generator", "unknown");
    meta.params = m.value("params", nlohmann::json::object());
    meta.seed = m.value("seed", std::uint64_t{0});
  }
  return Graph::from_edges(j.at("n").get<NodeId>(), edges, std::move(meta));
}

void save_graph(const Graph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << to_json(g).dump() << '\n';
}

Graph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open graph '" + path + "'");
  return graph_from_json(nlohmann::json::parse(in));
}

// ---------------------------------------------------------------------------

std::vector<NodeId> bfs_distances(const Graph& g, NodeId source) {
  std::vector<NodeId> dist(static_cast<std::size_t>(g.num_nodes()), -1);
  std::vector<NodeId> queue;
  queue.reserve(static_cast<std::size_t>(g.num_nodes()));
  dist[source] = 0;
  queue.push_back(source);
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const NodeId u = queue[head];
    for (NodeId v : g.neighbors(u))
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
  }
  return dist;
}

std::size_t count_components(const Graph& g) {
  std::vector<char> seen(static_cast<std::size_t>(g.num_nodes()), 0);
  std::size_t components = 0;
  std::vector<NodeId> stack;
  for (NodeId s = 0; s < g.num_nodes(); ++s) {
    if (seen[s]) continue;
    ++components;
    seen[s] = 1;
    stack.push_back(s);
    while (!stack.empty()) {
      const NodeId u = stack.back();
      stack.pop_back();
      for (NodeId v : g.neighbors(u))
        if (!seen[v]) {
          seen[v] = 1;
          stack.push_back(v);
        }
    }
  }
  return components;
}

bool is_connected(const Graph& g) { return g.num_nodes() > 0 && count_components(g) == 1; }

NodeId diameter(const Graph& g) {
  if (!is_connected(g)) throw std::invalid_argument("diameter: graph is disconnected");
  NodeId best = 0;
  for (NodeId s = 0; s < g.num_nodes(); ++s) {
    const auto d = bfs_distances(g, s);
    best = std::max(best, *std::max_element(d.begin(), d.end()));
  }
  return best;
}

double leading_eigenvalue(const Graph& g, double tol, int max_iter) {
  const NodeId n = g.num_nodes();
  if (n == 0) throw std::invalid_argument("leading_eigenvalue: empty graph");
  Eigen::VectorXd x = Eigen::VectorXd::Ones(n) / std::sqrt(double(n));
  Eigen::VectorXd ax(n);
  double residual = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    for (NodeId i = 0; i < n; ++i) {
      double s = 0.0;
      for (NodeId j : g.neighbors(i)) s += x[j];
      ax[i] = s;
    }
    const double mu = x.dot(ax);
    residual = (ax - mu * x).norm();
    if (residual <= tol * std::abs(mu) || (mu == 0.0 && residual == 0.0)) return mu;
    // Iterate on A + I: moves the spectrum to [1 - lambda_1, 1 + lambda_1] so
    // the -lambda_1 mode of bipartite graphs cannot cause oscillation.
    x = (ax + x).normalized();
  }
  throw ConvergenceError("leading_eigenvalue: no convergence after " + std::to_string(max_iter) +
                         " iterations (last residual " + std::to_string(residual) + ")");
}

Graph induced_subgraph(const Graph& g, std::span<const NodeId> nodes) {
  std::vector<NodeId> local(static_cast<std::size_t>(g.num_nodes()), -1);
  for (std::size_t k = 0; k < nodes.size(); ++k) local[nodes[k]] = static_cast<NodeId>(k);
  std::vector<Edge> edges;
  for (std::size_t k = 0; k < nodes.size(); ++k)
    for (NodeId v : g.neighbors(nodes[k]))
      if (local[v] > static_cast<NodeId>(k)) edges.emplace_back(static_cast<NodeId>(k), local[v]);
  return Graph::from_edges(static_cast<NodeId>(nodes.size()), edges);
}

std::vector<std::vector<NodeId>> reach_signatures(const Graph& g, std::optional<std::span<const NodeId>> restrict_to,
                                                  int l_max) {
  if (l_max < 1) throw std::invalid_argument("equivalence_classes: l_max must be >= 1");
  const NodeId n = g.num_nodes();
  std::vector<char> allowed(static_cast<std::size_t>(n), restrict_to ? 0 : 1);
  if (restrict_to)
    for (NodeId v : *restrict_to) allowed[v] = 1;

  std::vector<std::vector<NodeId>> sig(static_cast<std::size_t>(n));
  std::vector<NodeId> dist(static_cast<std::size_t>(n), -1);
  std::vector<NodeId> touched;
  for (NodeId s = 0; s < n; ++s) {
    if (!allowed[s]) continue;
    std::vector<NodeId> per_level(static_cast<std::size_t>(l_max) + 1, 0);
    std::vector<NodeId> frontier{s};
    dist[s] = 0;
    touched.assign(1, s);
    for (int level = 1; level <= l_max && !frontier.empty(); ++level) {
      std::vector<NodeId> next;
      for (NodeId u : frontier)
        for (NodeId v : g.neighbors(u))
          if (allowed[v] && dist[v] < 0) {
            dist[v] = level;
            next.push_back(v);
            touched.push_back(v);
          }
      per_level[level] = static_cast<NodeId>(next.size());
      frontier = std::move(next);
    }
    for (NodeId v : touched) dist[v] = -1;
    auto& row = sig[s];
    row.resize(static_cast<std::size_t>(l_max));
    NodeId running = 0;
    for (int l = 1; l <= l_max; ++l) row[l - 1] = running += per_level[l];
  }
  return sig;
}

std::vector<int> equivalence_classes(const Graph& g, std::optional<std::span<const NodeId>> restrict_to, int l_max) {
  const auto sig = reach_signatures(g, restrict_to, l_max);
  std::map<std::vector<NodeId>, int> class_of;
  std::vector<int> out(sig.size(), -1);
  for (std::size_t i = 0; i < sig.size(); ++i) {
    if (sig[i].empty()) continue;
    auto [it, inserted] = class_of.emplace(sig[i], static_cast<int>(class_of.size()));
    out[i] = it->second;
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string to_string(PropagationRule rule) {
  switch (rule) {
    case PropagationRule::Symmetric: return "symmetric";
    case PropagationRule::RandomWalk: return "random_walk";
    case PropagationRule::Mixture: return "mixture";
  }
  return "symmetric";
}

PropagationRule propagation_rule_from_string(const std::string& name) {
  if (name == "symmetric" || name == "S") return PropagationRule::Symmetric;
  if (name == "random_walk" || name == "R") return PropagationRule::RandomWalk;
  if (name == "mixture" || name == "M") return PropagationRule::Mixture;
  throw std::invalid_argument("unknown propagation rule '" + name + "'");
}

Eigen::SparseMatrix<double> propagation_matrix(const Graph& g, PropagationRule rule) {
  if (rule == PropagationRule::Mixture) throw std::invalid_argument("propagation_matrix: mixture rule is not square");
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(g.num_directed_edges());
  for (NodeId i = 0; i < g.num_nodes(); ++i)
    for (NodeId j : g.neighbors(i)) {
      const double w = rule == PropagationRule::Symmetric
                           ? detail::inv_sqrt_degree<double>(g, i) * detail::inv_sqrt_degree<double>(g, j)
                           : 1.0 / g.degree(i);
      trips.emplace_back(i, j, w);
    }
  Eigen::SparseMatrix<double> m(g.num_nodes(), g.num_nodes());
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

}  // namespace pzero
