#include "pzero/dmp.hpp"

#include "pzero/errors.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <thread>
#include <unordered_map>

namespace pzero {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void require_sir(const EpidemicParams& params, const char* fn) {
  if (params.model != EpidemicModel::SIR)
    throw UnsupportedModel(std::string(fn) + ": only SIR dynamics are supported, got " + to_string(params.model));
}

}  // namespace

DmpState::DmpState(const Graph& g, const EpidemicParams& params, NodeId source)
    : g_(&g), beta_(params.beta), gamma_(params.gamma), source_(source) {
  require_sir(params, "dmp_forward");
  if (source < 0 || source >= g.num_nodes()) throw std::invalid_argument("dmp_forward: source out of range");
  const auto m = g.num_directed_edges();
  const NodeId n = g.num_nodes();
  theta_.assign(m, 1.0);
  phi_.assign(m, 0.0);
  cavity_.assign(m, 0.0);
  const auto rows = g.row_offsets();
  for (auto e = rows[source]; e < rows[source + 1]; ++e) phi_[e] = 1.0;
  marg_.S = Eigen::VectorXd::Ones(n);
  marg_.S[source] = 0.0;
  marg_.R = Eigen::VectorXd::Zero(n);
  marg_.I = Eigen::VectorXd::Ones(n) - marg_.S;
  refresh_cavity_and_ps();
}

void DmpState::refresh_cavity_and_ps() {
  const auto rows = g_->row_offsets();
  const auto rev = g_->reverse_edges();
  std::vector<double> prefix;
  for (NodeId k = 0; k < g_->num_nodes(); ++k) {
    const auto begin = rows[k], end = rows[k + 1];
    const double alive = k == source_ ? 0.0 : 1.0;
    // Products of incoming theta[m->k] excluding one edge, by prefix/suffix.
    prefix.resize(static_cast<std::size_t>(end - begin) + 1);
    prefix[0] = 1.0;
    for (auto e = begin; e < end; ++e) prefix[e - begin + 1] = prefix[e - begin] * theta_[rev[e]];
    double suffix = 1.0;
    for (auto e = end; e-- > begin;) {
      cavity_[e] = alive * prefix[e - begin] * suffix;
      suffix *= theta_[rev[e]];
    }
    marg_.S[k] = alive * prefix.back();
  }
}

void DmpState::advance() {
  const std::vector<double> prev_cavity = cavity_;
  for (std::size_t e = 0; e < theta_.size(); ++e) theta_[e] -= beta_ * phi_[e];
  const Eigen::VectorXd prev_i = marg_.I;
  refresh_cavity_and_ps();
  const double keep = (1.0 - beta_) * (1.0 - gamma_);
  for (std::size_t e = 0; e < phi_.size(); ++e) phi_[e] = keep * phi_[e] - (cavity_[e] - prev_cavity[e]);
  marg_.R += gamma_ * prev_i;
  marg_.I = Eigen::VectorXd::Ones(marg_.S.size()) - marg_.S - marg_.R;
  ++t_;
}

Marginals dmp_forward(const Graph& g, const EpidemicParams& params, NodeId source, int t) {
  if (t < 0) throw std::invalid_argument("dmp_forward: t must be >= 0");
  DmpState state(g, params, source);
  for (int k = 0; k < t; ++k) state.advance();
  return state.marginals();
}

double dmp_likelihood(const Marginals& m, std::span<const NodeState> observed) {
  if (static_cast<Eigen::Index>(observed.size()) != m.S.size())
    throw std::invalid_argument("dmp_likelihood: snapshot and marginals differ in size");
  double ll = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    double p = 0.0;
    switch (observed[i]) {
      case NodeState::S: p = m.S[i]; break;
      case NodeState::I: p = m.I[i]; break;
      case NodeState::R: p = m.R[i]; break;
      default: throw UnsupportedModel("dmp_likelihood: E/Ia observations are not supported");
    }
    if (!(p > 0.0)) return kNegInf;
    ll += std::log(p);
  }
  return ll;
}

namespace {

std::vector<NodeId> candidate_sources(std::span<const NodeState> observed, bool prune) {
  std::vector<NodeId> out;
  bool any_infected = false;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (observed[i] == NodeState::E || observed[i] == NodeState::Ia)
      throw UnsupportedModel("dmp_infer: E/Ia observations are not supported");
    const bool infected = observed[i] != NodeState::S;
    any_infected |= infected;
    if (infected || !prune) out.push_back(static_cast<NodeId>(i));
  }
  if (!any_infected) throw std::invalid_argument("dmp_infer: empty epidemic (no non-S nodes)");
  return out;
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || count < 2) {
    for (std::size_t k = 0; k < count; ++k) body(k);
    return;
  }
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t k = w; k < count; k += workers) body(k);
    });
}

}  // namespace

SourceScores dmp_infer(const Graph& g, const EpidemicParams& params, std::span<const NodeState> observed, int t,
                       const DmpOptions& opts) {
  require_sir(params, "dmp_infer");
  if (static_cast<NodeId>(observed.size()) != g.num_nodes())
    throw std::invalid_argument("dmp_infer: snapshot size does not match graph");
  const auto candidates = candidate_sources(observed, opts.prune_candidates);
  SourceScores scores(g.num_nodes());
  parallel_for(candidates.size(), opts.threads, [&](std::size_t k) {
    scores[candidates[k]] = dmp_likelihood(dmp_forward(g, params, candidates[k], t), observed);
  });
  return scores;
}

SourceScores dmp_infer_scan(const Graph& g, const EpidemicParams& params, std::span<const NodeState> observed,
                            int T, const DmpOptions& opts) {
  require_sir(params, "dmp_infer_scan");
  if (T < 1) throw std::invalid_argument("dmp_infer_scan: T must be >= 1");
  const auto candidates = candidate_sources(observed, opts.prune_candidates);
  SourceScores scores(g.num_nodes());
  parallel_for(candidates.size(), opts.threads, [&](std::size_t k) {
    DmpState state(g, params, candidates[k]);
    double best = kNegInf;
    for (int t = 1; t <= T; ++t) {
      state.advance();
      best = std::max(best, dmp_likelihood(state.marginals(), observed));
    }
    scores[candidates[k]] = best;
  });
  return scores;
}

// ---------------------------------------------------------------------------
// Exact enumeration. Joint states pack 2 bits per node: 0 = S, 1 = I, 2 = R.

namespace {

using Packed = std::uint32_t;

inline unsigned code_of(NodeState s) {
  switch (s) {
    case NodeState::S: return 0;
    case NodeState::I: return 1;
    case NodeState::R: return 2;
    default: throw UnsupportedModel("exact_source_mle: only S/I/R observations are supported");
  }
}

inline unsigned get(Packed x, NodeId i) { return (x >> (2 * i)) & 3u; }

void check_exact_guard(const Graph& g, int t) {
  if (g.num_nodes() > kExactMaxNodes || t > kExactMaxSteps || t < 0)
    throw std::length_error("exact_source_mle: instance with n=" + std::to_string(g.num_nodes()) +
                            ", t=" + std::to_string(t) + " exceeds the guard n <= " + std::to_string(kExactMaxNodes) +
                            ", 0 <= t <= " + std::to_string(kExactMaxSteps));
}

}  // namespace

double exact_snapshot_probability(const Graph& g, const EpidemicParams& params, std::span<const NodeState> observed,
                                  NodeId source, int t) {
  require_sir(params, "exact_source_mle");
  check_exact_guard(g, t);
  const NodeId n = g.num_nodes();
  if (static_cast<NodeId>(observed.size()) != n) throw std::invalid_argument("exact_source_mle: size mismatch");
  std::vector<unsigned> obs(static_cast<std::size_t>(n));
  for (NodeId i = 0; i < n; ++i) obs[i] = code_of(observed[i]);

  const Packed start = Packed{1} << (2 * source);
  if (t == 0) {
    for (NodeId i = 0; i < n; ++i)
      if (obs[i] != get(start, i)) return 0.0;
    return 1.0;
  }
  if (obs[source] == 0) return 0.0;

  const double beta = params.beta, gamma = params.gamma;
  std::unordered_map<Packed, double> cur{{start, 1.0}}, next;

  // Per-node transition probability from code a to code b given the number of
  // infected neighbours.
  auto trans = [&](unsigned a, unsigned b, int infected_nbrs) -> double {
    if (a == 0) {
      const double escape = std::pow(1.0 - beta, infected_nbrs);
      return b == 0 ? escape : b == 1 ? 1.0 - escape : 0.0;
    }
    if (a == 1) return b == 1 ? 1.0 - gamma : b == 2 ? gamma : 0.0;
    return b == 2 ? 1.0 : 0.0;
  };
  auto infected_nbrs = [&](Packed x, NodeId i) {
    int c = 0;
    for (NodeId j : g.neighbors(i)) c += get(x, j) == 1;
    return c;
  };

  for (int step = 0; step + 1 < t; ++step) {
    next.clear();
    for (const auto& [x, mass] : cur) {
      // Depth-first over nodes, pruning successors inconsistent with the
      // observation (states are monotone S -> I -> R).
      std::function<void(NodeId, Packed, double)> expand = [&](NodeId i, Packed acc, double w) {
        if (w == 0.0) return;
        if (i == n) {
          next[acc] += w;
          return;
        }
        const unsigned a = get(x, i);
        const int k = a == 0 ? infected_nbrs(x, i) : 0;
        for (unsigned b = a; b <= 2; ++b) {
          if (b > obs[i]) break;
          const double p = trans(a, b, k);
          if (p > 0.0) expand(i + 1, acc | (Packed{b} << (2 * i)), w * p);
        }
      };
      expand(0, 0, mass);
    }
    std::swap(cur, next);
  }

  double total = 0.0;
  for (const auto& [x, mass] : cur) {
    double w = mass;
    for (NodeId i = 0; i < n && w > 0.0; ++i) {
      const unsigned a = get(x, i);
      w *= trans(a, obs[i], a == 0 ? infected_nbrs(x, i) : 0);
    }
    total += w;
  }
  return total;
}

SourceScores exact_source_mle(const Graph& g, const EpidemicParams& params, std::span<const NodeState> observed,
                              int t) {
  check_exact_guard(g, t);
  const NodeId n = g.num_nodes();
  std::vector<double> prob(static_cast<std::size_t>(n));
  double total = 0.0;
  for (NodeId j = 0; j < n; ++j) total += prob[j] = exact_snapshot_probability(g, params, observed, j, t);
  SourceScores scores(n);
  if (total <= 0.0) return scores;
  for (NodeId j = 0; j < n; ++j) scores[j] = prob[j] > 0.0 ? std::log(prob[j]) - std::log(total) : kNegInf;
  return scores;
}

}  // namespace pzero
