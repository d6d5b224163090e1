#include "gradcheck.hpp"
#include "oracles.hpp"

#include "pzero/dmp.hpp"
#include "pzero/gnn.hpp"
#include "pzero/metrics.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

using namespace pzero;

namespace {

GnnModel random_model(int inputs, int hidden, int layers, PropagationRule rule, std::uint64_t seed) {
  GnnHyper hp;
  hp.inputs = inputs;
  hp.hidden = hidden;
  hp.layers = layers;
  hp.rule = rule;
  GnnModel m = GnnModel::init(hp, seed);
  // Non-trivial BN parameters and running statistics.
  Rng rng(seed + 1);
  for (int l = 0; l < layers; ++l)
    for (int c = 0; c < hidden; ++c) {
      m.params.scale[l](0, c) = 0.5 + rng.uniform();
      m.params.shift[l](0, c) = rng.uniform() - 0.5;
      m.running_mean[l][c] = 0.2 * (rng.uniform() - 0.5);
      m.running_var[l][c] = 0.5 + rng.uniform();
    }
  return m;
}

States sir_states(NodeId n, std::uint64_t seed) {
  static const NodeState by3[] = {NodeState::S, NodeState::I, NodeState::R};
  Rng rng(seed);
  States s;
  for (NodeId i = 0; i < n; ++i) s.push_back(by3[rng.below(3)]);
  return s;
}

oracle::DenseGcn to_dense(const GnnModel& m) {
  oracle::DenseGcn d;
  d.U = m.params.U;
  for (int l = 0; l < m.hyper.layers; ++l) {
    d.W.push_back(m.params.W[l]);
    d.b.push_back(m.params.b[l].row(0));
    d.scale.push_back(m.params.scale[l].row(0));
    d.shift.push_back(m.params.shift[l].row(0));
    d.mean.push_back(m.running_mean[l]);
    d.var.push_back(m.running_var[l]);
  }
  d.Q = m.params.Q;
  d.P = m.params.P.row(0);
  d.slope = m.hyper.leaky_slope;
  d.eps = m.hyper.bn_eps;
  return d;
}

Batch single(const Graph& g, const States& s, NodeId target, int channels) {
  Batch b;
  b.add(g, s, target, channels);
  return b;
}

}  // namespace

TEST_CASE("defaults") {
  const TrainConfig c;
  CHECK(c.epochs == 150);
  CHECK(c.batch_size == 128);
  CHECK(c.hidden == 128);
  CHECK(c.dropout == 0.265);
  CHECK(c.layers == 10);
  CHECK(c.initial_lr == 0.0033);
  CHECK(c.plateau_factor == 0.5);
  CHECK(c.patience == 10);
  TrainConfig bad;
  bad.epochs = 0;
  CHECK_THROWS(bad.validate());
  bad = TrainConfig{};
  bad.dropout = 1.0;
  CHECK_THROWS(bad.validate());
  CHECK(input_channels(EpidemicModel::SIR) == 3);
  CHECK(input_channels(EpidemicModel::SEIR) == 4);
  CHECK(input_channels(EpidemicModel::CovidSeir) == 5);
}

TEST_CASE("one-hot encoding and batches") {
  const States s{NodeState::S, NodeState::I, NodeState::R};
  const Eigen::MatrixXd x = one_hot(s, 3);
  CHECK(x(0, 0) == 1.0);
  CHECK(x(1, 1) == 1.0);
  CHECK(x(2, 2) == 1.0);
  CHECK(x.sum() == 3.0);
  CHECK_THROWS(one_hot(States{NodeState::E}, 3));
  CHECK(one_hot(States{NodeState::Ia}, 5)(0, 3) == 1.0);

  Batch b;
  const Graph g = oracle::path(3), h = oracle::path(4);
  b.add(g, s, 1, 3);
  b.add(h, States{NodeState::S, NodeState::S, NodeState::I, NodeState::S}, 2, 3);
  CHECK(b.size() == 2);
  CHECK(b.offsets == std::vector<Eigen::Index>{0, 3, 7});
  CHECK(b.features.rows() == 7);
  CHECK_THROWS(b.add(g, s, 3, 3));
  CHECK_THROWS(b.add(h, s, 0, 3));
}

TEST_CASE("zero model scores every node the same") {
  GnnModel m = random_model(3, 6, 3, PropagationRule::Symmetric, 3);
  m.params.U.setZero();
  for (auto& w : m.params.W) w.setZero();
  for (auto& b : m.params.b) b.setZero();
  const Graph g = oracle::random_connected(12, 6, 2);
  const Eigen::VectorXd y = forward_eval(m, single(g, sir_states(12, 4), 0, 3));
  for (Eigen::Index i = 1; i < y.size(); ++i) CHECK(y[i] == y[0]);
}

TEST_CASE("residual identity with zero layers") {
  GnnModel m = random_model(3, 5, 4, PropagationRule::RandomWalk, 8);
  for (int l = 0; l < 4; ++l) {
    m.params.W[l].setZero();
    m.params.b[l].setZero();
    m.params.shift[l].setZero();
    m.running_mean[l].setZero();
    m.running_var[l].setOnes();
  }
  const Graph g = oracle::random_connected(9, 4, 2);
  const States s = sir_states(9, 1);
  const Eigen::MatrixXd h0 = one_hot(s, 3) * m.params.U.transpose();
  const Eigen::VectorXd expect = (h0 * m.params.Q.transpose()).cwiseMax(0.0) * m.params.P.transpose();
  const Eigen::VectorXd y = forward_eval(m, single(g, s, 0, 3));
  CHECK((y - expect).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hand-evaluated two-node network") {
  GnnHyper hp;
  hp.hidden = 1;
  hp.layers = 1;
  GnnModel m = GnnModel::init(hp, 0);
  m.params.U << 0.5, 2.0, -1.0;  // S, I, R
  m.params.W[0] << 1.5;
  m.params.b[0] << -0.25;
  m.params.scale[0] << 2.0;
  m.params.shift[0] << 0.1;
  m.running_mean[0] << 0.3;
  m.running_var[0] << 0.8;
  m.params.Q << 1.2;
  m.params.P << -0.7;
  const Graph g = oracle::path(2);
  const States s{NodeState::I, NodeState::S};
  const Eigen::VectorXd y = forward_eval(m, single(g, s, 0, 3));

  auto leaky = [](double v) { return v > 0 ? v : 0.01 * v; };
  const double h0 = 2.0, h1 = 0.5;
  // Degrees are one, so the symmetric operator is the adjacency: neighbours swap.
  auto layer = [&](double self, double other) {
    const double g1 = leaky(other * 1.5 - 0.25);
    const double bn = (g1 - 0.3) / std::sqrt(0.8 + 1e-5) * 2.0 + 0.1;
    return self + leaky(bn);
  };
  const double f0 = layer(h0, h1), f1 = layer(h1, h0);
  CHECK(std::abs(y[0] - (-0.7 * std::max(0.0, 1.2 * f0))) < 1e-12);
  CHECK(std::abs(y[1] - (-0.7 * std::max(0.0, 1.2 * f1))) < 1e-12);
}

TEST_CASE("eval forward matches a dense reference implementation") {
  for (int k = 0; k < 5; ++k) {
    const GnnModel m = random_model(3, 6, 1 + k % 3, PropagationRule::Symmetric, 20 + k);
    const Graph g = oracle::random_connected(10 + k, 5 + k, 40 + k);
    const States s = sir_states(g.num_nodes(), 60 + k);
    const Eigen::VectorXd y = forward_eval(m, single(g, s, 0, 3));
    const Eigen::VectorXd ref = oracle::dense_forward(to_dense(m), oracle::sym_norm_adjacency(g), one_hot(s, 3));
    CHECK((y - ref).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("permutation equivariance") {
  for (auto rule : {PropagationRule::Symmetric, PropagationRule::RandomWalk, PropagationRule::Mixture}) {
    const GnnModel m = random_model(3, 5, 3, rule, 5);
    const Graph g = oracle::random_connected(14, 9, 6);
    const States s = sir_states(14, 7);
    std::vector<NodeId> perm(14);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(1);
    for (std::size_t k = perm.size(); k > 1; --k) std::swap(perm[k - 1], perm[rng.below(k)]);
    std::vector<Edge> pe;
    for (auto [a, b] : g.edges()) pe.emplace_back(perm[a], perm[b]);
    const Graph pg = Graph::from_edges(14, pe);
    States ps(14);
    for (NodeId i = 0; i < 14; ++i) ps[perm[i]] = s[i];
    const Eigen::VectorXd y = forward_eval(m, single(g, s, 0, 3));
    const Eigen::VectorXd py = forward_eval(m, single(pg, ps, 0, 3));
    double worst = 0.0;
    for (NodeId i = 0; i < 14; ++i) worst = std::max(worst, std::abs(py[perm[i]] - y[i]));
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("receptive field is bounded by depth") {
  const Graph g = oracle::path(12);
  for (int layers = 1; layers <= 4; ++layers) {
    const GnnModel m = random_model(3, 4, layers, PropagationRule::Symmetric, 9 + layers);
    States a(12, NodeState::S), b(12, NodeState::S);
    a[0] = NodeState::I;
    b[0] = NodeState::I;
    b[11] = NodeState::R;  // differs only at node 11
    const Eigen::VectorXd ya = forward_eval(m, single(g, a, 0, 3));
    const Eigen::VectorXd yb = forward_eval(m, single(g, b, 0, 3));
    for (NodeId v = 0; v < 12; ++v) {
      if (11 - v > layers) CHECK(ya[v] == yb[v]);
    }
    CHECK(ya[11] != yb[11]);
  }
}

TEST_CASE("batched inference equals independent single calls") {
  const GnnModel m = random_model(3, 6, 2, PropagationRule::Mixture, 4);
  const Graph g = oracle::random_connected(15, 10, 3);
  std::vector<Snapshot> snaps;
  std::vector<std::size_t> ids;
  for (std::size_t k = 0; k < 7; ++k) {
    snaps.push_back({"g", 1, 0, sir_states(15, 100 + k), 0});
    ids.push_back(k);
  }
  const auto many = infer_many(m, g, snaps, ids, 3, 1);
  const auto threaded = infer_many(m, g, snaps, ids, 3, 3);
  for (std::size_t k = 0; k < 7; ++k) {
    const auto one = infer(m, g, snaps[k].states);
    CHECK((many[k].values() - one.values()).cwiseAbs().maxCoeff() < 1e-13);
    CHECK(threaded[k].values() == many[k].values());
  }
}

TEST_CASE("loss values") {
  Batch b = single(oracle::path(3), States{NodeState::I, NodeState::S, NodeState::S}, 0, 3);
  CHECK(loss(Eigen::VectorXd::Zero(3), b) == doctest::Approx(std::log(3.0)).epsilon(1e-15));
  CHECK(loss(Eigen::Vector3d(1, 0, 0), b) == doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 2))).epsilon(1e-15));
  CHECK(loss(Eigen::Vector3d(1, 0, 0), b) == doctest::Approx(0.5514).epsilon(1e-4));
  Eigen::VectorXd d;
  CHECK(loss(Eigen::Vector3d(800, 0, 0), b, &d) < 1e-300);
  CHECK(d.norm() < 1e-300);
}

TEST_CASE("gradients match finite differences") {
  int configs = 0;
  for (auto rule : {PropagationRule::Symmetric, PropagationRule::RandomWalk, PropagationRule::Mixture})
    for (int rep = 0; rep < 2; ++rep) {
      GnnModel m = random_model(3, 4, 2, rule, 70 + rep);
      m.hyper.dropout = rep == 0 ? 0.0 : 0.3;
      const Graph g = oracle::random_connected(6, 3, 80 + rep);
      Batch b;
      b.add(g, sir_states(6, 90 + rep), 1, 3);
      b.add(g, sir_states(6, 95 + rep), 4, 3);
      const auto res = oracle::check_gradients(m, b, 1234);
      INFO("rule " << to_string(rule) << " worst " << res.worst_tensor);
      CHECK(res.max_rel_error < 1e-4);
      ++configs;
    }
  CHECK(configs == 6);
}

TEST_CASE("gradient of an unused input channel is zero") {
  GnnModel m = random_model(5, 4, 2, PropagationRule::Symmetric, 3);
  const Graph g = oracle::random_connected(7, 3, 1);
  const States s{NodeState::S, NodeState::E, NodeState::I, NodeState::R, NodeState::S, NodeState::I, NodeState::E};
  Batch b = single(g, s, 2, 5);
  ForwardCache cache;
  const Eigen::VectorXd y = forward(m, b, Mode::Train, 0, &cache, false);
  Eigen::VectorXd dy;
  loss(y, b, &dy);
  const auto grads = backward(m, b, cache, dy);
  CHECK(grads.U.col(3).cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads.U.col(2).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("vanishing loss gives vanishing gradients") {
  GnnModel m = random_model(3, 4, 2, PropagationRule::Symmetric, 12);
  const Graph g = oracle::random_connected(6, 2, 3);
  Batch b = single(g, sir_states(6, 2), 0, 3);
  ForwardCache cache;
  Eigen::VectorXd y = forward(m, b, Mode::Train, 0, &cache, false);
  y[0] += 1000.0;  // probability one on the target in the limit
  Eigen::VectorXd dy;
  loss(y, b, &dy);
  CHECK(backward(m, b, cache, dy).squared_norm() < 1e-300);
}

TEST_CASE("running statistics change only in train mode with updates on") {
  GnnModel m = random_model(3, 4, 2, PropagationRule::Symmetric, 2);
  const Graph g = oracle::random_connected(8, 3, 3);
  const Batch b = single(g, sir_states(8, 5), 0, 3);
  const auto before = m.running_mean;
  forward(m, b, Mode::Eval);
  forward(m, b, Mode::Train, 1, nullptr, false);
  CHECK(m.running_mean[0] == before[0]);
  forward(m, b, Mode::Train, 1, nullptr, true);
  CHECK(m.running_mean[0] != before[0]);
}

TEST_CASE("Adam matches a hand-computed first step") {
  GnnModel m = random_model(3, 2, 1, PropagationRule::Symmetric, 1);
  GnnParameters grads = m.params.zeros_like();
  grads.P(0, 0) = 0.5;
  const double before = m.params.P(0, 0);
  AdamOptimizer adam(m.params);
  adam.step(m.params, grads, 0.01);
  // Bias-corrected moments are g and g^2, so the step is lr * g / (|g| + eps).
  CHECK(m.params.P(0, 0) == doctest::Approx(before - 0.01 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
  CHECK(m.params.P(0, 1) == doctest::Approx(m.params.P(0, 1)));
  adam.step(m.params, grads, 0.01);
  CHECK(m.params.P(0, 0) == doctest::Approx(before - 0.02).epsilon(1e-6));
}

TEST_CASE("plateau scheduler") {
  PlateauScheduler s(1.0, 0.5, 2);
  CHECK_FALSE(s.observe(1.0));
  CHECK_FALSE(s.observe(0.99995));  // within the relative threshold: not an improvement
  CHECK_FALSE(s.observe(1.0));
  CHECK(s.observe(1.0));
  CHECK(s.lr() == 0.5);
  CHECK_FALSE(s.observe(0.5));
  CHECK(s.lr() == 0.5);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const GnnModel m = random_model(4, 5, 3, PropagationRule::Mixture, 31);
  const std::string bytes = serialize_checkpoint(m, {{"config_hash", "abc"}});
  CHECK(bytes.substr(0, 8) == "PZGNNCK1");
  const GnnModel back = deserialize_checkpoint(bytes);
  CHECK(back.hyper.rule == PropagationRule::Mixture);
  CHECK(back.hyper.inputs == 4);
  CHECK(serialize_checkpoint(back, {{"config_hash", "abc"}}) == bytes);
  const Graph g = oracle::random_connected(9, 5, 2);
  States s(9, NodeState::S);
  s[3] = NodeState::E;
  s[4] = NodeState::I;
  s[5] = NodeState::R;
  CHECK(infer(m, g, s).values() == infer(back, g, s).values());

  const auto path = std::filesystem::temp_directory_path() / "pzero_model.ckpt";
  save_checkpoint(m, path.string());
  CHECK(load_checkpoint(path.string()).params.Q == m.params.Q);
  std::filesystem::remove(path);

  std::string broken = bytes;
  broken[0] = 'X';
  CHECK_THROWS(deserialize_checkpoint(broken));
  CHECK_THROWS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 8)));
}

namespace {

Dataset tiny_dataset(const Graph& g, std::size_t n, int t_fixed, std::uint64_t seed) {
  Dataset d;
  d.params = EpidemicParams::sir(0.4, 0.3);
  d.T = std::max(1, t_fixed);
  Rng rng(seed);
  for (std::size_t k = 0; k < n; ++k) {
    const NodeId src = static_cast<NodeId>(rng.below(static_cast<std::uint64_t>(g.num_nodes())));
    d.samples.push_back(run_episode(g, d.params, src, d.T, t_fixed, seed + k).snapshot);
    d.split.train.push_back(k);
  }
  d.split.val = d.split.train;
  return d;
}

double top1_on(const GnnModel& m, const Graph& g, const Dataset& d, const std::vector<std::size_t>& ids) {
  const auto scores = infer_many(m, g, d.samples, ids);
  std::vector<NodeId> truths;
  for (auto id : ids) truths.push_back(d.samples[id].source);
  return topk_accuracy(scores, truths, 1);
}

}  // namespace

TEST_CASE("training is deterministic") {
  const Graph g = oracle::random_connected(12, 6, 2);
  const Dataset d = tiny_dataset(g, 20, 2, 4);
  TrainConfig c;
  c.epochs = 3;
  c.hidden = 6;
  c.layers = 2;
  c.batch_size = 8;
  const auto a = train(g, d, c, 7), b = train(g, d, c, 7);
  CHECK(serialize_checkpoint(a.model) == serialize_checkpoint(b.model));
  CHECK(a.log_csv() == b.log_csv());
  CHECK(a.log_csv().rfind("epoch,lr,train_loss,val_loss,val_top1\n", 0) == 0);
  Dataset empty = d;
  empty.split.val.clear();
  CHECK_THROWS(train(g, empty, c, 7));
}

TEST_CASE("identity task: t = 0 snapshots are learnt") {
  const Graph g = oracle::random_connected(20, 10, 5);
  const Dataset d = tiny_dataset(g, 64, 0, 11);
  TrainConfig c;
  c.epochs = 30;
  c.hidden = 16;
  c.layers = 2;
  c.batch_size = 16;
  const auto r = train(g, d, c, 3);
  CHECK(top1_on(r.model, g, d, d.split.train) == 1.0);
}

TEST_CASE("capacity: 32 samples on 20 nodes are memorised") {
  const Graph g = oracle::random_connected(20, 10, 6);
  const Dataset d = tiny_dataset(g, 32, 3, 21);
  TrainConfig c;
  c.epochs = 150;
  c.hidden = 64;
  c.layers = 4;
  c.batch_size = 8;
  c.dropout = 0.0;  // a memorisation check, so no regulariser
  const auto r = train(g, d, c, 5);
  const double acc = top1_on(r.model, g, d, d.split.train);
  MESSAGE("train top-1 " << acc << " (best epoch " << r.best_epoch << ")");
  CHECK(acc >= 0.95);
}

TEST_CASE("desk-scale ER: GCN against DMP" * doctest::test_suite("slow")) {
  const NodeId n = 200;
  const Graph g = generate_er(n, 2 * std::log(double(n)) / n, 3, true);
  const auto params = EpidemicParams::from_r0(EpidemicModel::SIR, 2.5, 0.4, leading_eigenvalue(g));
  const Dataset d = generate_dataset(g, params, 4000, 30, 17);
  TrainConfig c;
  c.epochs = 40;
  c.hidden = 64;
  c.layers = 6;
  c.batch_size = 64;
  const auto r = train(g, d, c, 1);
  const double gnn = top1_on(r.model, g, d, d.split.test);
  std::vector<SourceScores> dmp_scores;
  std::vector<NodeId> truths;
  for (auto id : d.split.test) {
    dmp_scores.push_back(dmp_infer(g, params, d.samples[id].states, d.samples[id].t));
    truths.push_back(d.samples[id].source);
  }
  const double dmp = topk_accuracy(dmp_scores, truths, 1);
  MESSAGE("GCN test top-1 " << gnn << ", DMP " << dmp << ", random " << 1.0 / n);
  CHECK(gnn > 10.0 / n);
  CHECK(gnn >= dmp - 0.05);
}
