#include "pzero/metrics.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace pzero {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_lengths(std::size_t a, std::size_t b, const char* fn) {
  if (a != b) throw std::invalid_argument(std::string(fn) + ": scores and truths differ in length");
}
}  // namespace

double topk_accuracy(std::span<const SourceScores> scores, std::span<const NodeId> truths, int k) {
  if (k < 1) throw std::invalid_argument("topk_accuracy: k must be >= 1");
  check_lengths(scores.size(), truths.size(), "topk_accuracy");
  if (scores.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t s = 0; s < scores.size(); ++s) hits += scores[s].rank_of(truths[s]) < k;
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

double normalized_rank(std::span<const SourceScores> scores, std::span<const NodeId> truths) {
  check_lengths(scores.size(), truths.size(), "normalized_rank");
  if (scores.empty()) return 0.0;
  const NodeId n = scores.front().size();
  // 1 - sum r / (|D| N) as one exact integer ratio, so the extremes come out
  // as exactly 1 and 1/N.
  std::uint64_t ahead_of_last = 0;
  for (std::size_t s = 0; s < scores.size(); ++s) {
    if (scores[s].size() != n) throw std::invalid_argument("normalized_rank: samples with different node counts");
    ahead_of_last += static_cast<std::uint64_t>(n - scores[s].rank_of(truths[s]));
  }
  return static_cast<double>(ahead_of_last) / (static_cast<double>(scores.size()) * n);
}

std::vector<NodeId> infected_nodes(std::span<const NodeState> states) {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < states.size(); ++i)
    if (states[i] != NodeState::S) out.push_back(static_cast<NodeId>(i));
  return out;
}

SourceScores rumor_centrality(const Graph& g, std::span<const NodeId> infected) {
  SourceScores scores(g.num_nodes());
  if (infected.empty()) throw std::invalid_argument("rumor_centrality: no infected nodes");
  const Graph sub = induced_subgraph(g, infected);
  const NodeId n = sub.num_nodes();
  if (!is_connected(sub) || sub.num_edges() != static_cast<std::size_t>(n - 1))
    throw std::invalid_argument(
        "rumor_centrality: infected subgraph is not a tree; use distance_centrality on general graphs");

  // Root at local node 0: BFS order, parents, subtree sizes.
  std::vector<NodeId> order{0}, parent(static_cast<std::size_t>(n), -1);
  parent[0] = 0;
  for (std::size_t h = 0; h < order.size(); ++h)
    for (NodeId v : sub.neighbors(order[h]))
      if (parent[v] < 0) {
        parent[v] = order[h];
        order.push_back(v);
      }
  std::vector<double> size(static_cast<std::size_t>(n), 1.0);
  for (std::size_t h = order.size(); h-- > 1;) size[parent[order[h]]] += size[order[h]];

  std::vector<double> log_r(static_cast<std::size_t>(n));
  double root = std::lgamma(n + 1.0);
  for (double s : size) root -= std::log(s);
  log_r[0] = root;
  // Moving the root from parent p to child c swaps |T_c| for n - |T_c|.
  for (std::size_t h = 1; h < order.size(); ++h) {
    const NodeId c = order[h];
    log_r[c] = log_r[parent[c]] + std::log(size[c]) - std::log(n - size[c]);
  }
  for (NodeId k = 0; k < n; ++k) scores[infected[k]] = log_r[k];
  return scores;
}

SourceScores distance_centrality(const Graph& g, std::span<const NodeId> infected) {
  if (infected.empty()) throw std::invalid_argument("distance_centrality: no infected nodes");
  SourceScores scores(g.num_nodes());
  const Graph sub = induced_subgraph(g, infected);
  const NodeId n = sub.num_nodes();

  // Pick the largest component; ties go to the component with the smallest
  // original node id.
  std::vector<int> comp(static_cast<std::size_t>(n), -1);
  std::vector<std::size_t> comp_size;
  std::vector<NodeId> comp_min;
  for (NodeId s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    const int c = static_cast<int>(comp_size.size());
    comp_size.push_back(0);
    comp_min.push_back(infected[s]);
    const auto d = bfs_distances(sub, s);
    for (NodeId v = 0; v < n; ++v)
      if (d[v] >= 0) {
        comp[v] = c;
        ++comp_size[c];
        comp_min[c] = std::min(comp_min[c], infected[v]);
      }
  }
  int best = 0;
  for (int c = 1; c < static_cast<int>(comp_size.size()); ++c)
    if (comp_size[c] > comp_size[best] || (comp_size[c] == comp_size[best] && comp_min[c] < comp_min[best])) best = c;

  for (NodeId u = 0; u < n; ++u) {
    if (comp[u] != best) continue;
    const auto d = bfs_distances(sub, u);
    double total = 0.0;
    for (NodeId v = 0; v < n; ++v)
      if (d[v] > 0) total += d[v];
    scores[infected[u]] = -total;
  }
  return scores;
}

// ---------------------------------------------------------------------------

std::string MetricsReport::csv() const {
  std::ostringstream os;
  os.precision(8);
  os << "bucket,n,top1,top5,top10,top20,R_t\n";
  auto row = [&](const std::string& label, const BucketMetrics& b) {
    os << label << ',' << b.count << ',' << b.top1 << ',' << b.top5 << ',' << b.top10 << ',' << b.top20 << ','
       << b.normalized_rank << '\n';
  };
  for (const auto& b : buckets) row(std::to_string(b.bucket), b);
  row("all", overall);
  return os.str();
}

namespace {

BucketMetrics compute_bucket(int bucket, const std::vector<SourceScores>& scores, const std::vector<NodeId>& truths) {
  BucketMetrics m;
  m.bucket = bucket;
  m.count = scores.size();
  m.top1 = topk_accuracy(scores, truths, 1);
  m.top5 = topk_accuracy(scores, truths, 5);
  m.top10 = topk_accuracy(scores, truths, 10);
  m.top20 = topk_accuracy(scores, truths, 20);
  m.normalized_rank = normalized_rank(scores, truths);
  return m;
}

}  // namespace

MetricsReport evaluate(const std::vector<Snapshot>& samples, std::span<const std::size_t> sample_ids,
                       const std::map<std::size_t, Prediction>& predictions, int bucket_width,
                       const std::string& method) {
  if (bucket_width < 1) throw std::invalid_argument("evaluate: bucket width must be >= 1");
  std::vector<std::size_t> missing;
  for (auto id : sample_ids)
    if (!predictions.contains(id)) missing.push_back(id);
  if (!missing.empty()) {
    std::string msg = "evaluate: missing predictions for sample ids";
    for (std::size_t k = 0; k < missing.size() && k < 20; ++k) msg += " " + std::to_string(missing[k]);
    if (missing.size() > 20) msg += " ... (" + std::to_string(missing.size()) + " total)";
    throw std::invalid_argument(msg);
  }

  std::map<int, std::pair<std::vector<SourceScores>, std::vector<NodeId>>> by_bucket;
  std::vector<SourceScores> all_scores;
  std::vector<NodeId> all_truths;
  MetricsReport report;
  report.method = method;
  for (auto id : sample_ids) {
    if (id >= samples.size()) throw std::invalid_argument("evaluate: sample id out of range");
    const auto& pred = predictions.at(id);
    const auto& snap = samples[id];
    auto& [sc, tr] = by_bucket[snap.t / bucket_width];
    sc.push_back(pred.scores);
    tr.push_back(snap.source);
    all_scores.push_back(pred.scores);
    all_truths.push_back(snap.source);
    report.runtime_ms += pred.runtime_ms;
  }
  for (const auto& [bucket, data] : by_bucket) report.buckets.push_back(compute_bucket(bucket, data.first, data.second));
  report.overall = compute_bucket(-1, all_scores, all_truths);
  return report;
}

}  // namespace pzero
