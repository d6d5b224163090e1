#include "oracles.hpp"

#include "pzero/epidemic.hpp"
#include "pzero/limits.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>
#include <map>

using namespace pzero;

namespace {

States single_source(NodeId n, NodeId src, NodeState s = NodeState::I) {
  States st(static_cast<std::size_t>(n), NodeState::S);
  st[src] = s;
  return st;
}

}  // namespace

TEST_CASE("params validation and constructors") {
  CHECK_THROWS(EpidemicParams::sir(1.2, 0.4).validate());
  CHECK_THROWS(EpidemicParams::sir(0.2, -0.1).validate());
  CHECK_NOTHROW(EpidemicParams::sir(0.2, 0.4).validate());
  const auto p = EpidemicParams::from_r0(EpidemicModel::SIR, 2.5, 0.4, 5.0);
  CHECK(p.beta == doctest::Approx(0.2));
  CHECK(p.r0(5.0, 0.0) == doctest::Approx(2.5));
  CHECK(epidemic_model_from_string(to_string(EpidemicModel::CovidSeir)) == EpidemicModel::CovidSeir);
  CHECK_THROWS(epidemic_model_from_string("sis"));
}

TEST_CASE("covid preset values") {
  const auto p = EpidemicParams::covid_preset();
  CHECK(p.model == EpidemicModel::CovidSeir);
  CHECK(p.beta == 0.073);
  CHECK(p.alpha == doctest::Approx(1.0 / 2.5));
  CHECK(p.gamma == doctest::Approx(1.0 / 4.0));
  CHECK(p.p_a == 0.5);
  CHECK(p.r_a == 0.5);
  // R0 = (1 - p_a + r_a p_a) <k> lambda / gamma
  CHECK(p.r0(0.0, 10.0) == doctest::Approx(0.75 * 10 * 0.073 / 0.25));
}

TEST_CASE("state letters") {
  for (auto s : {NodeState::S, NodeState::E, NodeState::I, NodeState::Ia, NodeState::R})
    CHECK(state_from_letter(state_letter(s)) == s);
  CHECK(state_letter(NodeState::Ia) == 'A');
  CHECK_THROWS(state_from_letter('X'));
}

TEST_CASE("step functions check the model") {
  const Graph g = oracle::path(3);
  const States s = single_source(3, 0);
  CHECK_THROWS(step_seir(g, EpidemicParams::sir(0.5, 0.4), s, StepRng(1, 0)));
  CHECK_THROWS(step_sir(g, EpidemicParams::seir(0.5, 0.4, 0.5), s, StepRng(1, 0)));
}

TEST_CASE("SIR: beta = 0 never infects") {
  const Graph g = oracle::complete(6);
  const auto p = EpidemicParams::sir(0.0, 0.3);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto ep = run_episode(g, p, 2, 10, 10, seed, true);
    for (const auto& st : ep.trajectory)
      for (NodeId i = 0; i < 6; ++i)
        if (i != 2) CHECK(st[i] == NodeState::S);
  }
}

TEST_CASE("SIR: beta = 1, gamma = 0 is a BFS wave") {
  const Graph g = oracle::path(8);
  const auto ep = run_episode(g, EpidemicParams::sir(1.0, 0.0), 0, 7, 7, 3, true);
  for (int t = 0; t <= 7; ++t)
    for (NodeId i = 0; i < 8; ++i) CHECK((ep.trajectory[t][i] == NodeState::I) == (i <= t));
  const auto snap = run_episode(oracle::path(9), EpidemicParams::sir(1.0, 0.0), 4, 5, 2, 3).snapshot;
  for (NodeId i = 0; i < 9; ++i) CHECK((snap.states[i] != NodeState::S) == (std::abs(i - 4) <= 2));
}

TEST_CASE("SIR: one-step leaf infection frequency from an infected star center") {
  const Graph g = oracle::star(5);
  const auto p = EpidemicParams::sir(0.3, 0.4);
  const int trials = 100000;
  std::array<int, 5> hits{};
  const States s = single_source(5, 0);
  for (int k = 0; k < trials; ++k) {
    const States next = step_sir(g, p, s, StepRng(static_cast<std::uint64_t>(k), 0));
    for (NodeId i = 1; i < 5; ++i) hits[i] += next[i] == NodeState::I;
  }
  const double sigma = std::sqrt(0.3 * 0.7 / trials);
  for (NodeId i = 1; i < 5; ++i) CHECK(std::abs(hits[i] / double(trials) - 0.3) < 3 * sigma);
}

TEST_CASE("SEIR: alpha = 1 adds exactly one step per hop") {
  const Graph g = oracle::path(6);
  const auto ep = run_episode(g, EpidemicParams::seir(1.0, 0.0, 1.0), 0, 10, 10, 9, true);
  const auto sir = run_episode(g, EpidemicParams::sir(1.0, 0.0), 0, 10, 10, 9, true);
  for (NodeId d = 1; d < 6; ++d) {
    // SIR reaches hop d at step d; SEIR exposes it at 2d-1 and makes it infectious at 2d.
    CHECK(sir.trajectory[d][d] == NodeState::I);
    CHECK(sir.trajectory[d - 1][d] == NodeState::S);
    CHECK(ep.trajectory[2 * d - 2][d] == NodeState::S);
    CHECK(ep.trajectory[2 * d - 1][d] == NodeState::E);
    CHECK(ep.trajectory[2 * d][d] == NodeState::I);
  }
}

TEST_CASE("SEIR: alpha = 0 dies out after the source is removed") {
  const Graph g = oracle::complete(5);
  const auto ep = run_episode(g, EpidemicParams::seir(0.9, 0.5, 0.0), 0, 40, 40, 4, true);
  for (const auto& st : ep.trajectory)
    for (NodeId i = 1; i < 5; ++i) CHECK(st[i] != NodeState::I);
  CHECK(ep.trajectory.back()[0] == NodeState::R);
}

TEST_CASE("SEIR: two-node chain matches exact Markov probabilities") {
  // Oracle: joint chain over (x0, x1) with codes S0 E1 I2 R3, source in I.
  const double beta = 0.5, alpha = 0.5, gamma = 0.3;
  std::map<std::pair<int, int>, double> dist{{{2, 0}, 1.0}};
  auto node_next = [&](int x, bool pressure) -> std::vector<std::pair<int, double>> {
    switch (x) {
      case 0: return pressure ? std::vector<std::pair<int, double>>{{0, 1 - beta}, {1, beta}}
                              : std::vector<std::pair<int, double>>{{0, 1.0}};
      case 1: return {{1, 1 - alpha}, {2, alpha}};
      case 2: return {{2, 1 - gamma}, {3, gamma}};
      default: return {{3, 1.0}};
    }
  };
  for (int t = 0; t < 3; ++t) {
    std::map<std::pair<int, int>, double> next;
    for (auto [st, p] : dist)
      for (auto [a, pa] : node_next(st.first, st.second == 2))
        for (auto [b, pb] : node_next(st.second, st.first == 2)) next[{a, b}] += p * pa * pb;
    dist = next;
  }

  const Graph g = oracle::path(2);
  const auto params = EpidemicParams::seir(beta, gamma, alpha);
  const int trials = 100000;
  std::map<std::pair<int, int>, int> counts;
  auto code = [](NodeState s) { return s == NodeState::S ? 0 : s == NodeState::E ? 1 : s == NodeState::I ? 2 : 3; };
  for (int k = 0; k < trials; ++k) {
    const auto snap = run_episode(g, params, 0, 3, 3, 1000 + k).snapshot;
    ++counts[{code(snap.states[0]), code(snap.states[1])}];
  }
  for (auto [st, p] : dist) {
    const double freq = counts[st] / double(trials);
    CHECK(std::abs(freq - p) <= 3 * oracle::binom_sigma(p, trials) + 1e-12);
  }
  for (auto [st, c] : counts) CHECK(dist.contains(st));
}

TEST_CASE("CovidSeir: categorical E transition and asymptomatic channel") {
  const Graph g = Graph::from_edges(1, {});
  auto p = EpidemicParams::covid_preset();
  const int trials = 100000;
  int ia = 0, sym = 0;
  const States s = single_source(1, 0, NodeState::E);
  for (int k = 0; k < trials; ++k) {
    const auto next = step_covid_seir(g, p, s, StepRng(static_cast<std::uint64_t>(k), 0));
    ia += next[0] == NodeState::Ia;
    sym += next[0] == NodeState::I;
  }
  const double target = p.p_a * p.alpha;
  CHECK(std::abs(ia / double(trials) - target) < 3 * oracle::binom_sigma(target, trials));
  CHECK(std::abs(sym / double(trials) - (1 - p.p_a) * p.alpha) < 3 * oracle::binom_sigma(target, trials));

  p.p_a = 1.0;
  const Graph k6 = oracle::complete(6);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto ep = run_episode(k6, p, 0, 30, 30, seed, true);
    for (const auto& st : ep.trajectory)
      for (NodeId i = 1; i < 6; ++i) CHECK(st[i] != NodeState::I);
  }
}

TEST_CASE("CovidSeir: asymptomatic neighbours infect with r_a * lambda") {
  const Graph g = oracle::path(2);
  auto p = EpidemicParams::covid_preset();
  p.beta = 0.6;
  p.r_a = 0.5;
  const int trials = 100000;
  int hit = 0;
  States s{NodeState::Ia, NodeState::S};
  for (int k = 0; k < trials; ++k) hit += step_covid_seir(g, p, s, StepRng(static_cast<std::uint64_t>(k), 0))[1] == NodeState::E;
  CHECK(std::abs(hit / double(trials) - 0.3) < 3 * oracle::binom_sigma(0.3, trials));
}

TEST_CASE("synchronous step is independent of node iteration order") {
  const Graph g = oracle::random_connected(30, 25, 8);
  for (auto model : {EpidemicModel::SIR, EpidemicModel::SEIR, EpidemicModel::CovidSeir}) {
    EpidemicParams p = model == EpidemicModel::CovidSeir ? EpidemicParams::covid_preset()
                                                         : EpidemicParams::seir(0.4, 0.3, 0.5);
    p.model = model;
    p.beta = 0.4;
    const auto ep = run_episode(g, p, 0, 6, 6, 77, true);
    std::vector<NodeId> order(30);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(3);
    for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);
    const States& cur = ep.trajectory[3];
    const StepRng srng(99, 3);
    CHECK(step(g, p, cur, srng) == step(g, p, cur, srng, std::span<const NodeId>(order)));
  }
}

TEST_CASE("episodes: reachability and monotone states over random runs") {
  for (int k = 0; k < 1000; ++k) {
    const Graph g = oracle::random_connected(12 + k % 10, k % 7, 500 + k);
    EpidemicParams p;
    switch (k % 3) {
      case 0: p = EpidemicParams::sir(0.5, 0.3); break;
      case 1: p = EpidemicParams::seir(0.6, 0.3, 0.5); break;
      default: p = EpidemicParams::covid_preset(); p.beta = 0.5;
    }
    const NodeId src = static_cast<NodeId>(k % g.num_nodes());
    const int t = k % 8;
    const auto ep = run_episode(g, p, src, 8, t, 9000 + k, true);
    CHECK(ep.snapshot.t == t);
    CHECK(ep.snapshot.states == ep.trajectory[t]);
    const auto dist = bfs_distances(g, src);
    for (NodeId i = 0; i < g.num_nodes(); ++i)
      if (ep.snapshot.states[i] != NodeState::S) CHECK(dist[i] <= t);
    for (std::size_t s = 1; s < ep.trajectory.size(); ++s)
      for (NodeId i = 0; i < g.num_nodes(); ++i)
        CHECK(state_rank(ep.trajectory[s][i]) >= state_rank(ep.trajectory[s - 1][i]));
  }
}

TEST_CASE("episodes: t_observe = 0 and determinism") {
  const Graph g = oracle::random_connected(20, 10, 1);
  const auto p = EpidemicParams::sir(0.5, 0.3);
  const auto snap = run_episode(g, p, 7, 10, 0, 5).snapshot;
  int non_s = 0;
  for (auto s : snap.states) non_s += s != NodeState::S;
  CHECK(non_s == 1);
  CHECK(snap.states[7] == NodeState::I);
  CHECK(run_episode(g, p, 3, 10, 6, 11).snapshot.states == run_episode(g, p, 3, 10, 6, 11).snapshot.states);
  // Snapshot taken without a stored trajectory equals the trajectory entry.
  CHECK(run_episode(g, p, 3, 10, 6, 11).snapshot.states == run_episode(g, p, 3, 10, 6, 11, true).trajectory[6]);
}

TEST_CASE("small-beta product form is linear up to the quadratic term") {
  Rng rng(12);
  for (int draw = 0; draw < 1000; ++draw) {
    const Graph g = oracle::random_connected(10 + draw % 20, draw % 30, 700 + draw);
    const double beta = 0.01 * rng.uniform();
    Eigen::VectorXd pv(g.num_nodes());
    for (auto& v : pv) v = rng.uniform();
    const Eigen::VectorXd prod_form = infection_probability(g, beta, pv);
    const Eigen::VectorXd lin_form = linearized_infection_probability(g, beta, pv);
    const auto adj = oracle::adjacency(g);
    for (NodeId i = 0; i < g.num_nodes(); ++i) {
      double prod = 1.0, lin = 0.0;
      for (NodeId j : adj[i]) {
        prod *= 1.0 - beta * pv[j];
        lin += beta * pv[j];
      }
      CHECK(std::abs(prod_form[i] - (1.0 - prod)) <= 1e-15);
      CHECK(std::abs(lin_form[i] - lin) <= 1e-15);
      CHECK(lin_form[i] - prod_form[i] >= -1e-15);
      CHECK(lin_form[i] - prod_form[i] <= lin_form[i] * lin_form[i] + 1e-15);
    }
  }
}

TEST_CASE("step samples the product-form infection probability") {
  // Node 0 has three infectious neighbours; its infection frequency over many
  // steps must match 1 - (1 - beta)^3.
  const Graph g = oracle::star(4);
  const auto params = EpidemicParams::sir(0.2, 0.0);
  States s{NodeState::S, NodeState::I, NodeState::I, NodeState::I};
  Eigen::VectorXd indicator(4);
  indicator << 0, 1, 1, 1;
  const double expect = infection_probability(g, 0.2, indicator)[0];
  CHECK(expect == doctest::Approx(1 - 0.8 * 0.8 * 0.8).epsilon(1e-15));
  const int trials = 100000;
  int hits = 0;
  for (int k = 0; k < trials; ++k) hits += step(g, params, s, StepRng(5, static_cast<std::uint64_t>(k)))[0] == NodeState::I;
  CHECK(std::abs(double(hits) / trials - expect) <= 3 * oracle::binom_sigma(expect, trials));
}

TEST_CASE("mean field: beta = 0 decays I geometrically") {
  const Graph g = oracle::random_connected(10, 5, 2);
  const double gamma = 0.4, dt = 0.01;
  const auto traj = integrate_mean_field(g, 0.0, gamma, MeanFieldState::single_source(10, 3), 5.0, dt);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const double t = k * dt;
    CHECK(traj[k].S[3] == 0.0);
    CHECK(traj[k].S.sum() == 9.0);
    // Euler: (1 - gamma dt)^k against exp(-gamma t)
    CHECK(std::abs(traj[k].I[3] - std::exp(-gamma * t)) <= gamma * gamma * t * dt);
  }
}

TEST_CASE("mean field: conservation, monotone S and step-size guard") {
  const Graph g = oracle::random_connected(40, 40, 6);
  const double beta = 0.2, gamma = 0.3;
  const double dt = max_mean_field_dt(g, beta, gamma);
  CHECK(dt == doctest::Approx(0.1 / std::max(beta * g.max_degree(), gamma)));
  const auto traj = integrate_mean_field(g, beta, gamma, MeanFieldState::single_source(40, 0), 10.0, dt);
  double prev = traj.front().S.sum();
  for (const auto& st : traj) {
    for (NodeId i = 0; i < 40; ++i) {
      CHECK(std::abs(st.S[i] + st.I[i] + st.R[i] - 1.0) <= 1e-12);
      CHECK(st.S[i] >= 0.0);
      CHECK(st.I[i] >= -1e-12);
    }
    CHECK(st.S.sum() <= prev + 1e-12);
    prev = st.S.sum();
  }
  CHECK_THROWS(integrate_mean_field(g, beta, gamma, MeanFieldState::single_source(40, 0), 1.0, 2 * dt));
}

TEST_CASE("mean field: early growth follows exp((beta lambda_1 - gamma) t)") {
  const NodeId n = 1000;
  const Graph g = generate_er(n, 2.0 * std::log(double(n)) / n, 5, true);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.dense_adjacency());
  const double lambda = es.eigenvalues()(n - 1);
  Eigen::VectorXd psi = es.eigenvectors().col(n - 1);
  if (psi.sum() < 0) psi = -psi;
  psi /= psi.sum();

  const double gamma = 0.4, r0 = 2.5;
  const double beta = r0 * gamma / lambda;
  const double eps = 1e-6;
  MeanFieldState init{Eigen::VectorXd::Ones(n) - eps * psi, eps * psi, Eigen::VectorXd::Zero(n)};
  const double horizon = 0.3 * t_max<double>(n, gamma, r0);
  const double dt = max_mean_field_dt(g, beta, gamma);
  const auto traj = integrate_mean_field(g, beta, gamma, init, horizon, dt);
  const double rate = beta * lambda - gamma;
  double worst = 0.0;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const double predicted = eps * std::exp(rate * k * dt);
    worst = std::max(worst, std::abs(traj[k].I.sum() / predicted - 1.0));
  }
  MESSAGE("worst relative deviation " << worst);
  CHECK(worst < 0.05);
}
