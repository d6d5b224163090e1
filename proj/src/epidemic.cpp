#include "pzero/epidemic.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace pzero {

std::string to_string(EpidemicModel model) {
  switch (model) {
    case EpidemicModel::SIR: return "sir";
    case EpidemicModel::SEIR: return "seir";
    case EpidemicModel::CovidSeir: return "covid";
  }
  return "sir";
}

EpidemicModel epidemic_model_from_string(const std::string& name) {
  if (name == "sir" || name == "SIR") return EpidemicModel::SIR;
  if (name == "seir" || name == "SEIR") return EpidemicModel::SEIR;
  if (name == "covid" || name == "covid_seir" || name == "CovidSeir") return EpidemicModel::CovidSeir;
  throw std::invalid_argument("unknown epidemic model '" + name + "'");
}

char state_letter(NodeState s) noexcept {
  switch (s) {
    case NodeState::S: return 'S';
    case NodeState::E: return 'E';
    case NodeState::I: return 'I';
    case NodeState::Ia: return 'A';
    case NodeState::R: return 'R';
  }
  return '?';
}

NodeState state_from_letter(char c) {
  switch (c) {
    case 'S': return NodeState::S;
    case 'E': return NodeState::E;
    case 'I': return NodeState::I;
    case 'A': return NodeState::Ia;
    case 'R': return NodeState::R;
    default: throw std::invalid_argument(std::string("unknown state letter '") + c + "'");
  }
}

void EpidemicParams::validate() const {
  auto check = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument(std::string("epidemic parameter ") + name + "=" + std::to_string(v) +
                                  " outside [0, 1]");
  };
  check(beta, "beta");
  check(gamma, "gamma");
  check(alpha, "alpha");
  check(p_a, "p_a");
  check(r_a, "r_a");
}

double EpidemicParams::r0(double lambda_1, double mean_degree) const {
  if (model == EpidemicModel::CovidSeir) return (1.0 - p_a + r_a * p_a) * mean_degree * beta / gamma;
  return beta * lambda_1 / gamma;
}

EpidemicParams EpidemicParams::sir(double beta, double gamma) {
  EpidemicParams p;
  p.model = EpidemicModel::SIR;
  p.beta = beta;
  p.gamma = gamma;
  return p;
}

EpidemicParams EpidemicParams::seir(double beta, double gamma, double alpha) {
  EpidemicParams p = sir(beta, gamma);
  p.model = EpidemicModel::SEIR;
  p.alpha = alpha;
  return p;
}

EpidemicParams EpidemicParams::from_r0(EpidemicModel model, double r0, double gamma, double lambda_1, double alpha) {
  if (lambda_1 <= 0.0) throw std::invalid_argument("from_r0: lambda_1 must be positive");
  EpidemicParams p = seir(r0 * gamma / lambda_1, gamma, alpha);
  p.model = model;
  p.validate();
  return p;
}

EpidemicParams EpidemicParams::covid_preset() {
  EpidemicParams p;
  p.model = EpidemicModel::CovidSeir;
  p.beta = 0.073;
  p.alpha = 1.0 / 2.5;
  p.gamma = 1.0 / 4.0;
  p.p_a = 0.5;
  p.r_a = 0.5;
  return p;
}

// ---------------------------------------------------------------------------

namespace {

// Probability that a susceptible node escapes infection this step.
inline double escape_probability(const Graph& g, std::span<const NodeState> states, NodeId i, double beta,
                                 double asymptomatic_beta) {
  int symptomatic = 0, asymptomatic = 0;
  for (NodeId j : g.neighbors(i)) {
    symptomatic += states[j] == NodeState::I;
    asymptomatic += states[j] == NodeState::Ia;
  }
  double escape = 1.0;
  if (symptomatic) escape *= std::pow(1.0 - beta, symptomatic);
  if (asymptomatic) escape *= std::pow(1.0 - asymptomatic_beta, asymptomatic);
  return escape;
}

NodeState next_state(const Graph& g, const EpidemicParams& p, std::span<const NodeState> states, NodeId i,
                     const StepRng& rng) {
  const NodeState s = states[i];
  const double u = rng.uniform(static_cast<std::uint64_t>(i));
  switch (s) {
    case NodeState::S: {
      const double asym_beta = p.model == EpidemicModel::CovidSeir ? p.r_a * p.beta : p.beta;
      const double infect = 1.0 - escape_probability(g, states, i, p.beta, asym_beta);
      if (u < infect) return p.model == EpidemicModel::SIR ? NodeState::I : NodeState::E;
      return s;
    }
    case NodeState::E:
      if (p.model == EpidemicModel::CovidSeir) {
        // One categorical draw: [0, (1-p_a) alpha) -> I, next p_a alpha -> Ia.
        const double to_i = (1.0 - p.p_a) * p.alpha;
        if (u < to_i) return NodeState::I;
        if (u < p.alpha) return NodeState::Ia;
        return s;
      }
      return u < p.alpha ? NodeState::I : s;
    case NodeState::I:
    case NodeState::Ia:
      return u < p.gamma ? NodeState::R : s;
    case NodeState::R:
      return s;
  }
  return s;
}

States step_impl(const Graph& g, const EpidemicParams& params, std::span<const NodeState> states, const StepRng& rng,
                 std::optional<std::span<const NodeId>> order) {
  if (static_cast<NodeId>(states.size()) != g.num_nodes())
    throw std::invalid_argument("step: state vector size does not match graph");
  States out(states.begin(), states.end());
  if (order) {
    for (NodeId i : *order) out[i] = next_state(g, params, states, i, rng);
  } else {
    for (NodeId i = 0; i < g.num_nodes(); ++i) out[i] = next_state(g, params, states, i, rng);
  }
  return out;
}

void require_model(const EpidemicParams& p, EpidemicModel m, const char* fn) {
  if (p.model != m) throw std::invalid_argument(std::string(fn) + ": wrong epidemic model " + to_string(p.model));
}

}  // namespace

States step_sir(const Graph& g, const EpidemicParams& params, std::span<const NodeState> states, const StepRng& rng) {
  require_model(params, EpidemicModel::SIR, "step_sir");
  return step_impl(g, params, states, rng, std::nullopt);
}

States step_seir(const Graph& g, const EpidemicParams& params, std::span<const NodeState> states, const StepRng& rng) {
  require_model(params, EpidemicModel::SEIR, "step_seir");
  return step_impl(g, params, states, rng, std::nullopt);
}

States step_covid_seir(const Graph& g, const EpidemicParams& params, std::span<const NodeState> states,
                       const StepRng& rng) {
  require_model(params, EpidemicModel::CovidSeir, "step_covid_seir");
  return step_impl(g, params, states, rng, std::nullopt);
}

States step(const Graph& g, const EpidemicParams& params, std::span<const NodeState> states, const StepRng& rng,
            std::optional<std::span<const NodeId>> order) {
  return step_impl(g, params, states, rng, order);
}

Eigen::VectorXd infection_probability(const Graph& g, double beta, const Eigen::VectorXd& p) {
  if (p.size() != g.num_nodes()) throw std::invalid_argument("infection_probability: size mismatch");
  Eigen::VectorXd out(p.size());
  for (NodeId i = 0; i < g.num_nodes(); ++i) {
    double escape = 1.0;
    for (NodeId j : g.neighbors(i)) escape *= 1.0 - beta * p[j];
    out[i] = 1.0 - escape;
  }
  return out;
}

Eigen::VectorXd linearized_infection_probability(const Graph& g, double beta, const Eigen::VectorXd& p) {
  if (p.size() != g.num_nodes()) throw std::invalid_argument("linearized_infection_probability: size mismatch");
  Eigen::VectorXd out(p.size());
  for (NodeId i = 0; i < g.num_nodes(); ++i) {
    double sum = 0.0;
    for (NodeId j : g.neighbors(i)) sum += p[j];
    out[i] = beta * sum;
  }
  return out;
}

Episode run_episode(const Graph& g, const EpidemicParams& params, NodeId source, int T, int t_observe,
                    std::uint64_t seed, bool keep_trajectory, const std::string& graph_id) {
  if (t_observe < 0 || t_observe > T) throw std::invalid_argument("run_episode: require 0 <= t_observe <= T");
  if (source < 0 || source >= g.num_nodes()) throw std::invalid_argument("run_episode: source out of range");
  params.validate();

  Episode ep;
  States states(static_cast<std::size_t>(g.num_nodes()), NodeState::S);
  states[source] = NodeState::I;
  const int horizon = keep_trajectory ? T : t_observe;
  if (t_observe == 0) ep.snapshot.states = states;
  if (keep_trajectory) ep.trajectory.push_back(states);
  for (int k = 0; k < horizon; ++k) {
    states = step(g, params, states, StepRng(seed, static_cast<std::uint64_t>(k)));
    if (k + 1 == t_observe) ep.snapshot.states = states;
    if (keep_trajectory) ep.trajectory.push_back(states);
  }
  ep.snapshot.graph_id = graph_id;
  ep.snapshot.t = t_observe;
  ep.snapshot.source = source;
  ep.snapshot.seed = seed;
  return ep;
}

// ---------------------------------------------------------------------------

MeanFieldState MeanFieldState::single_source(NodeId n, NodeId source) {
  MeanFieldState s;
  s.S = Eigen::VectorXd::Ones(n);
  s.R = Eigen::VectorXd::Zero(n);
  s.S[source] = 0.0;
  s.I = Eigen::VectorXd::Ones(n) - s.S - s.R;
  return s;
}

double max_mean_field_dt(const Graph& g, double beta, double gamma) {
  const double rate = std::max(beta * g.max_degree(), gamma);
  return rate > 0.0 ? 0.1 / rate : std::numeric_limits<double>::infinity();
}

std::vector<MeanFieldState> integrate_mean_field(const Graph& g, double beta, double gamma,
                                                 const MeanFieldState& init, double T, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("integrate_mean_field: dt must be positive");
  const double limit = max_mean_field_dt(g, beta, gamma);
  if (dt > limit * (1.0 + 1e-12))
    throw std::invalid_argument("integrate_mean_field: dt=" + std::to_string(dt) + " exceeds stability limit " +
                                std::to_string(limit));
  const NodeId n = g.num_nodes();
  if (init.S.size() != n || init.R.size() != n) throw std::invalid_argument("integrate_mean_field: size mismatch");

  const auto steps = static_cast<long>(std::llround(T / dt));
  std::vector<MeanFieldState> traj;
  traj.reserve(static_cast<std::size_t>(steps) + 1);
  MeanFieldState cur{init.S, Eigen::VectorXd::Ones(n) - init.S - init.R, init.R};
  traj.push_back(cur);
  Eigen::VectorXd pressure(n);
  constexpr double slack = 1e-9;
  for (long k = 0; k < steps; ++k) {
    for (NodeId i = 0; i < n; ++i) {
      double s = 0.0;
      for (NodeId j : g.neighbors(i)) s += cur.I[j];
      pressure[i] = s;
    }
    MeanFieldState next;
    next.S = cur.S - dt * beta * cur.S.cwiseProduct(pressure);
    next.R = cur.R + dt * gamma * cur.I;
    next.I = Eigen::VectorXd::Ones(n) - next.S - next.R;
    const double lo = std::min({next.S.minCoeff(), next.I.minCoeff(), next.R.minCoeff()});
    const double hi = std::max({next.S.maxCoeff(), next.I.maxCoeff(), next.R.maxCoeff()});
    if (lo < -slack || hi > 1.0 + slack)
      throw std::runtime_error("integrate_mean_field: probability left [0,1] at step " + std::to_string(k + 1) +
                               "; reduce dt");
    cur = std::move(next);
    traj.push_back(cur);
  }
  return traj;
}

}  // namespace pzero
