#pragma once

#include "pzero/graph.hpp"
#include "pzero/random.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pzero {

enum class EpidemicModel { SIR, SEIR, CovidSeir };

std::string to_string(EpidemicModel model);
EpidemicModel epidemic_model_from_string(const std::string& name);

/// Compartment of a node. Values are ordered along every legal trajectory
/// (S < E < I, Ia < R), so a state index never decreases.
enum class NodeState : std::uint8_t { S = 0, E = 1, I = 2, Ia = 3, R = 4 };

char state_letter(NodeState s) noexcept;
NodeState state_from_letter(char c);

/// Ordinal used for monotonicity checks; I and Ia share a rank.
constexpr int state_rank(NodeState s) noexcept {
  switch (s) {
    case NodeState::S: return 0;
    case NodeState::E: return 1;
    case NodeState::I:
    case NodeState::Ia: return 2;
    case NodeState::R: return 3;
  }
  return 0;
}

constexpr bool is_infectious(NodeState s) noexcept { return s == NodeState::I || s == NodeState::Ia; }

/// Dynamics parameters, all per discrete step. For CovidSeir, beta is the
/// per-contact rate lambda.
struct EpidemicParams {
  EpidemicModel model = EpidemicModel::SIR;
  double beta = 0.0;
  double gamma = 0.4;
  double alpha = 0.5;
  double p_a = 0.5;
  double r_a = 0.5;

  /// Throws when a probability lies outside [0, 1].
  void validate() const;

  /// Basic reproduction number. SIR/SEIR: beta * lambda_1 / gamma. CovidSeir:
  /// (1 - p_a + r_a p_a) * mean_degree * beta / gamma.
  double r0(double lambda_1, double mean_degree) const;

  static EpidemicParams sir(double beta, double gamma);
  static EpidemicParams seir(double beta, double gamma, double alpha);
  /// beta = r0 * gamma / lambda_1.
  static EpidemicParams from_r0(EpidemicModel model, double r0, double gamma, double lambda_1, double alpha = 0.5);
  /// COVID-calibrated asymptomatic SEIR: alpha = 1/2.5, gamma = 1/4,
  /// p_a = r_a = 0.5, per-contact rate lambda = 0.073.
  static EpidemicParams covid_preset();
};

using States = std::vector<NodeState>;

/// One synchronous SIR step. Every decision reads the pre-step state.
States step_sir(const Graph& g, const EpidemicParams& params, std::span<const NodeState> states, const StepRng& rng);
States step_seir(const Graph& g, const EpidemicParams& params, std::span<const NodeState> states, const StepRng& rng);
States step_covid_seir(const Graph& g, const EpidemicParams& params, std::span<const NodeState> states,
                       const StepRng& rng);

/// Dispatches on params.model. When order is given nodes are visited in that
/// order; the result is the same for every order.
States step(const Graph& g, const EpidemicParams& params, std::span<const NodeState> states, const StepRng& rng,
            std::optional<std::span<const NodeId>> order = std::nullopt);

/// Per-node probability of being infected in one step given independent
/// infectious probabilities p_j of the neighbours: 1 - prod_j (1 - beta p_j).
/// This is the rule step() samples from when p is a 0/1 indicator.
Eigen::VectorXd infection_probability(const Graph& g, double beta, const Eigen::VectorXd& p);

/// First-order form beta * sum_j p_j; it overestimates the product form by
/// at most the square of itself.
Eigen::VectorXd linearized_infection_probability(const Graph& g, double beta, const Eigen::VectorXd& p);

/// Observed state of a graph at step t, with the true source.
struct Snapshot {
  std::string graph_id;
  int t = 0;
  NodeId source = 0;
  States states;
  std::uint64_t seed = 0;
};

struct Episode {
  Snapshot snapshot;
  /// States at steps 0..T (only filled when requested).
  std::vector<States> trajectory;
};

/// Simulates T steps from a single infectious source and snapshots step
/// t_observe. Step k uses StepRng(seed, k).
Episode run_episode(const Graph& g, const EpidemicParams& params, NodeId source, int T, int t_observe,
                    std::uint64_t seed, bool keep_trajectory = false, const std::string& graph_id = "");

// ---------------------------------------------------------------------------
// Mean-field SIR ODE on a graph:
//   dS_i/dt = -beta S_i sum_j A_ij I_j,  dR_i/dt = gamma I_i,  I_i = 1 - S_i - R_i.

struct MeanFieldState {
  Eigen::VectorXd S, I, R;

  static MeanFieldState single_source(NodeId n, NodeId source);
};

/// Forward-Euler trajectory, including the initial state; T / dt steps.
std::vector<MeanFieldState> integrate_mean_field(const Graph& g, double beta, double gamma,
                                                 const MeanFieldState& init, double T, double dt);

/// Largest stable step for integrate_mean_field.
double max_mean_field_dt(const Graph& g, double beta, double gamma);

}  // namespace pzero
