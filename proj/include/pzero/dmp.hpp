#pragma once

#include "pzero/epidemic.hpp"
#include "pzero/scores.hpp"

#include <Eigen/Core>

#include <vector>

namespace pzero {

/// Node marginals at one time step.
struct Marginals {
  Eigen::VectorXd S, I, R;
};

/// Dynamic message passing state for discrete-time SIR from a single source.
/// Edge arrays are indexed by the directed edge id of the graph (k -> j is
/// stored in row k).
///
///   theta[k->j](t)   = theta[k->j](t-1) - beta phi[k->j](t-1)
///   cavity[k->j](t)  = [k != source] prod_{m in N(k) \ j} theta[m->k](t)
///   phi[k->j](t)     = (1-beta)(1-gamma) phi[k->j](t-1) - (cavity(t) - cavity(t-1))
///   P_S[i](t)        = [i != source] prod_{k in N(i)} theta[k->i](t)
///   P_R[i](t)        = P_R[i](t-1) + gamma P_I[i](t-1),  P_I = 1 - P_S - P_R
///
/// with theta = 1 and phi[k->j](0) = [k == source]. Exact on trees.
class DmpState {
 public:
  DmpState(const Graph& g, const EpidemicParams& params, NodeId source);

  /// Advances one step.
  void advance();
  int time() const noexcept { return t_; }

  const Marginals& marginals() const noexcept { return marg_; }
  const std::vector<double>& theta() const noexcept { return theta_; }
  const std::vector<double>& phi() const noexcept { return phi_; }
  const std::vector<double>& cavity() const noexcept { return cavity_; }

 private:
  void refresh_cavity_and_ps();

  const Graph* g_;
  double beta_, gamma_;
  NodeId source_;
  int t_ = 0;
  std::vector<double> theta_, phi_, cavity_;
  Marginals marg_;
};

/// Node marginals at time t for the given source.
Marginals dmp_forward(const Graph& g, const EpidemicParams& params, NodeId source, int t);

/// Sum over nodes of the log marginal of the observed state; -inf when a
/// factor is zero. E/Ia observations throw UnsupportedModel.
double dmp_likelihood(const Marginals& marginals, std::span<const NodeState> observed);

struct DmpOptions {
  /// Only evaluate non-S observed nodes as candidates (lossless).
  bool prune_candidates = true;
  int threads = 1;
};

/// Log-likelihood score for each candidate source given a snapshot at known
/// time t. S-observed nodes score -inf.
SourceScores dmp_infer(const Graph& g, const EpidemicParams& params, std::span<const NodeState> observed, int t,
                       const DmpOptions& opts = {});

/// Unknown observation time: each candidate's score is its best
/// log-likelihood over t = 1..T.
SourceScores dmp_infer_scan(const Graph& g, const EpidemicParams& params, std::span<const NodeState> observed,
                            int T, const DmpOptions& opts = {});

/// Size guards for exact_source_mle.
inline constexpr NodeId kExactMaxNodes = 12;
inline constexpr int kExactMaxSteps = 6;

/// Exact source posterior under a uniform prior, log P(x^t | source) -
/// log sum_j P(x^t | j), by forward dynamic programming over the joint
/// SIR state space. Zero-likelihood sources score -inf.
SourceScores exact_source_mle(const Graph& g, const EpidemicParams& params, std::span<const NodeState> observed,
                              int t);

/// Exact probability P(x^t = observed | source).
double exact_snapshot_probability(const Graph& g, const EpidemicParams& params, std::span<const NodeState> observed,
                                  NodeId source, int t);

}  // namespace pzero
