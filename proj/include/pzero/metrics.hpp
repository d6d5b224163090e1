#pragma once

#include "pzero/dataset.hpp"
#include "pzero/scores.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pzero {

/// Fraction of samples whose truth is among the k best-ranked nodes.
double topk_accuracy(std::span<const SourceScores> scores, std::span<const NodeId> truths, int k);

/// R = 1 - (1 / (|D| N)) sum_u r_u with 0-based ranks r_u. All samples must
/// share one node count N.
double normalized_rank(std::span<const SourceScores> scores, std::span<const NodeId> truths);

/// Rumor centrality log R(u) = log(N_I!) - sum_v log |T_v^u| over the
/// infected tree, for every infected u (others -inf). Throws when the
/// infected subgraph is not a tree.
SourceScores rumor_centrality(const Graph& g, std::span<const NodeId> infected);

/// Infected nodes (state != S) of a snapshot.
std::vector<NodeId> infected_nodes(std::span<const NodeState> states);

/// score(u) = -sum_v d(u, v) over the infected subgraph. Only nodes of the
/// largest infected component (ties: the one holding the smallest id) are
/// scored; everything else is -inf.
SourceScores distance_centrality(const Graph& g, std::span<const NodeId> infected);

inline constexpr int kReportK[] = {1, 5, 10, 20};

struct BucketMetrics {
  int bucket = 0;
  std::size_t count = 0;
  double top1 = 0, top5 = 0, top10 = 0, top20 = 0;
  double normalized_rank = 0;
};

struct MetricsReport {
  std::string method;
  std::vector<BucketMetrics> buckets;
  BucketMetrics overall;
  double runtime_ms = 0.0;

  /// "bucket,n,top1,top5,top10,top20,R_t", one row per bucket plus "all".
  std::string csv() const;
};

/// One method output for one sample.
struct Prediction {
  std::size_t sample_id = 0;
  SourceScores scores;
  double runtime_ms = 0.0;
};

/// Buckets test samples by floor(t / bucket_width) and computes every metric
/// per bucket. Throws listing the ids of samples without a prediction.
MetricsReport evaluate(const std::vector<Snapshot>& samples, std::span<const std::size_t> sample_ids,
                       const std::map<std::size_t, Prediction>& predictions, int bucket_width = 1,
                       const std::string& method = "");

}  // namespace pzero
