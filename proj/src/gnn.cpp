#include "pzero/gnn.hpp"

#include "pzero/random.hpp"

#include <Eigen/SparseCore>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace pzero {

int input_channels(EpidemicModel model) {
  switch (model) {
    case EpidemicModel::SIR: return 3;
    case EpidemicModel::SEIR: return 4;
    case EpidemicModel::CovidSeir: return 5;
  }
  return 3;
}

namespace {

// Channel of a state in an M-channel one-hot encoding.
int channel_of(NodeState s, int channels) {
  static constexpr int k3[] = {0, -1, 1, -1, 2};
  static constexpr int k4[] = {0, 1, 2, -1, 3};
  static constexpr int k5[] = {0, 1, 2, 3, 4};
  const auto idx = static_cast<int>(s);
  const int c = channels == 3 ? k3[idx] : channels == 4 ? k4[idx] : channels == 5 ? k5[idx] : -1;
  if (c < 0)
    throw std::invalid_argument(std::string("state '") + state_letter(s) + "' has no channel in a " +
                                std::to_string(channels) + "-channel encoding");
  return c;
}

}  // namespace

Eigen::MatrixXd one_hot(std::span<const NodeState> states, int channels) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(states.size()), channels);
  for (std::size_t i = 0; i < states.size(); ++i) x(static_cast<Eigen::Index>(i), channel_of(states[i], channels)) = 1.0;
  return x;
}

void Batch::add(const Graph& g, std::span<const NodeState> states, NodeId target, int channels) {
  if (static_cast<NodeId>(states.size()) != g.num_nodes()) throw std::invalid_argument("Batch::add: size mismatch");
  if (target < 0 || target >= g.num_nodes()) throw std::invalid_argument("Batch::add: target out of range");
  const Eigen::Index start = offsets.back();
  const Eigen::MatrixXd x = one_hot(states, channels);
  if (features.cols() != channels) features.resize(0, channels);
  features.conservativeResize(start + x.rows(), channels);
  features.bottomRows(x.rows()) = x;
  graphs.push_back(&g);
  offsets.push_back(start + x.rows());
  targets.push_back(target);
}

// ---------------------------------------------------------------------------

GnnParameters GnnParameters::zeros_like() const {
  GnnParameters z = *this;
  for (auto* t : z.tensors()) t->setZero();
  return z;
}

std::vector<Eigen::MatrixXd*> GnnParameters::tensors() {
  std::vector<Eigen::MatrixXd*> out{&U};
  for (std::size_t l = 0; l < W.size(); ++l) {
    out.push_back(&W[l]);
    out.push_back(&b[l]);
    out.push_back(&scale[l]);
    out.push_back(&shift[l]);
  }
  out.push_back(&Q);
  out.push_back(&P);
  return out;
}

std::vector<const Eigen::MatrixXd*> GnnParameters::tensors() const {
  auto mut = const_cast<GnnParameters*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

std::vector<std::string> GnnParameters::names() const {
  std::vector<std::string> out{"U"};
  for (std::size_t l = 0; l < W.size(); ++l) {
    const auto s = std::to_string(l);
    for (const char* base : {"W", "b", "bn_scale", "bn_shift"}) out.push_back(std::string(base) + s);
  }
  out.push_back("Q");
  out.push_back("P");
  return out;
}

double GnnParameters::squared_norm() const {
  double s = 0.0;
  for (const auto* t : tensors()) s += t->squaredNorm();
  return s;
}

GnnModel GnnModel::init(const GnnHyper& hyper, std::uint64_t seed) {
  if (hyper.inputs < 3 || hyper.inputs > 5 || hyper.hidden < 1 || hyper.layers < 0)
    throw std::invalid_argument("GnnModel::init: invalid hyperparameters");
  GnnModel m;
  m.hyper = hyper;
  Rng rng(hash_words(seed, {0x494e4954ULL}));
  auto uniform = [&](Eigen::Index rows, Eigen::Index cols, double fan_in) {
    const double bound = 1.0 / std::sqrt(fan_in);
    Eigen::MatrixXd t(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) t(i, j) = (2.0 * rng.uniform() - 1.0) * bound;
    return t;
  };
  const int c = hyper.hidden;
  const int in = c * rule_width(hyper.rule);
  m.params.U = uniform(c, hyper.inputs, hyper.inputs);
  for (int l = 0; l < hyper.layers; ++l) {
    m.params.W.push_back(uniform(in, c, in));
    m.params.b.push_back(uniform(1, c, in));
    m.params.scale.push_back(Eigen::MatrixXd::Ones(1, c));
    m.params.shift.push_back(Eigen::MatrixXd::Zero(1, c));
    m.running_mean.push_back(Eigen::RowVectorXd::Zero(c));
    m.running_var.push_back(Eigen::RowVectorXd::Ones(c));
  }
  m.params.Q = uniform(c, c, c);
  m.params.P = uniform(1, c, c);
  return m;
}

// ---------------------------------------------------------------------------

namespace {

using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// f(A) and its adjoint as sparse operators for one graph.
struct PropOp {
  PropagationRule rule;
  SpMat main, main_t, adj;

  PropOp(const Graph& g, PropagationRule r) : rule(r) {
    const PropagationRule base = r == PropagationRule::Mixture ? PropagationRule::Symmetric : r;
    main = propagation_matrix(g, base);
    main_t = main.transpose();
    if (r == PropagationRule::Mixture) {
      std::vector<Eigen::Triplet<double>> t;
      for (NodeId i = 0; i < g.num_nodes(); ++i)
        for (NodeId j : g.neighbors(i)) t.emplace_back(i, j, 1.0);
      adj.resize(g.num_nodes(), g.num_nodes());
      adj.setFromTriplets(t.begin(), t.end());
    }
  }

  template <typename In, typename Out>
  void apply(const In& h, Out&& out) const {
    if (rule == PropagationRule::Mixture) {
      const auto c = h.cols();
      out.leftCols(c).noalias() = adj * h;
      out.rightCols(c).noalias() = main * h;
    } else {
      out.noalias() = main * h;
    }
  }

  template <typename In, typename Out>
  void apply_transpose(const In& d, Out&& out) const {
    if (rule == PropagationRule::Mixture) {
      const auto c = d.cols() / 2;
      out.noalias() = adj * d.leftCols(c);
      out.noalias() += main * d.rightCols(c);
    } else {
      out.noalias() = main_t * d;
    }
  }
};

class PropCache {
 public:
  PropCache(const Batch& batch, PropagationRule rule) {
    for (const Graph* g : batch.graphs)
      if (!ops_.contains(g)) ops_.emplace(g, PropOp(*g, rule));
  }
  const PropOp& at(const Graph* g) const { return ops_.at(g); }

 private:
  std::map<const Graph*, PropOp> ops_;
};

Eigen::MatrixXd propagate_batch(const PropCache& ops, const Batch& batch, const Eigen::MatrixXd& h, int width) {
  Eigen::MatrixXd out(h.rows(), h.cols() * width);
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto o = batch.offsets[k], n = batch.offsets[k + 1] - o;
    ops.at(batch.graphs[k]).apply(h.middleRows(o, n), out.middleRows(o, n));
  }
  return out;
}

Eigen::MatrixXd propagate_batch_transpose(const PropCache& ops, const Batch& batch, const Eigen::MatrixXd& d,
                                          int width) {
  Eigen::MatrixXd out(d.rows(), d.cols() / width);
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto o = batch.offsets[k], n = batch.offsets[k + 1] - o;
    ops.at(batch.graphs[k]).apply_transpose(d.middleRows(o, n), out.middleRows(o, n));
  }
  return out;
}

inline Eigen::MatrixXd leaky(const Eigen::MatrixXd& x, double slope) {
  return x.unaryExpr([slope](double v) { return v >= 0.0 ? v : slope * v; });
}

inline Eigen::MatrixXd leaky_grad(const Eigen::MatrixXd& x, double slope) {
  return x.unaryExpr([slope](double v) { return v >= 0.0 ? 1.0 : slope; });
}

Eigen::VectorXd forward_impl(const GnnModel& model, const Batch& batch, Mode mode, std::uint64_t dropout_seed,
                             ForwardCache* cache, std::vector<Eigen::RowVectorXd>* batch_mean,
                             std::vector<Eigen::RowVectorXd>* batch_var) {
  const auto& hp = model.hyper;
  const auto& p = model.params;
  if (batch.features.cols() != hp.inputs)
    throw std::invalid_argument("forward: batch has " + std::to_string(batch.features.cols()) +
                                " input channels, model expects " + std::to_string(hp.inputs));
  if (batch.size() == 0) throw std::invalid_argument("forward: empty batch");
  const int width = rule_width(hp.rule);
  const PropCache ops(batch, hp.rule);
  const bool train = mode == Mode::Train;
  const double keep = 1.0 - hp.dropout;
  const auto rows = static_cast<double>(batch.total_nodes());

  if (cache) {
    cache->mode = mode;
    cache->layers.assign(static_cast<std::size_t>(hp.layers), {});
  }
  Eigen::MatrixXd h = batch.features * p.U.transpose();
  for (int l = 0; l < hp.layers; ++l) {
    const Eigen::MatrixXd ph = propagate_batch(ops, batch, h, width);
    Eigen::MatrixXd z = ph * p.W[l];
    z.rowwise() += p.b[l].row(0);
    const Eigen::MatrixXd g = leaky(z, hp.leaky_slope);

    Eigen::RowVectorXd mean, var;
    if (train) {
      mean = g.colwise().mean();
      var = (g.rowwise() - mean).array().square().colwise().sum() / rows;
      if (batch_mean) batch_mean->push_back(mean);
      if (batch_var) batch_var->push_back(var);
    } else {
      mean = model.running_mean[l];
      var = model.running_var[l];
    }
    const Eigen::RowVectorXd inv_std = (var.array() + hp.bn_eps).rsqrt();
    Eigen::MatrixXd g_hat = (g.rowwise() - mean).array().rowwise() * inv_std.array();
    Eigen::MatrixXd bn = g_hat.array().rowwise() * p.scale[l].row(0).array();
    bn.rowwise() += p.shift[l].row(0);

    Eigen::MatrixXd next = h + leaky(bn, hp.leaky_slope);
    Eigen::MatrixXd mask;
    if (train && hp.dropout > 0.0) {
      mask.resize(next.rows(), next.cols());
      for (Eigen::Index j = 0; j < mask.cols(); ++j)
        for (Eigen::Index i = 0; i < mask.rows(); ++i)
          mask(i, j) = to_unit(hash_words(dropout_seed, {static_cast<std::uint64_t>(l), static_cast<std::uint64_t>(i),
                                                         static_cast<std::uint64_t>(j)})) < keep
                           ? 1.0 / keep
                           : 0.0;
      next = next.cwiseProduct(mask);
    }
    if (cache) {
      auto& c = cache->layers[l];
      c.input = std::move(h);
      c.z = std::move(z);
      c.g_hat = std::move(g_hat);
      c.bn_out = std::move(bn);
      c.mask = std::move(mask);
      c.inv_std = inv_std;
    }
    h = std::move(next);
  }
  Eigen::MatrixXd pre = h * p.Q.transpose();
  Eigen::VectorXd y = pre.cwiseMax(0.0) * p.P.transpose();
  if (cache) {
    cache->h_final = std::move(h);
    cache->readout_pre = std::move(pre);
  }
  return y;
}

// Inference-only path. Eval-mode BN is a per-channel affine map, so the
// post-convolution chain folds into one pass; row-major storage keeps the
// sparse products streaming over contiguous rows.
Eigen::VectorXd forward_eval_fused(const GnnModel& model, const Batch& batch) {
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto& hp = model.hyper;
  const auto& p = model.params;
  if (batch.features.cols() != hp.inputs)
    throw std::invalid_argument("forward: batch has " + std::to_string(batch.features.cols()) +
                                " input channels, model expects " + std::to_string(hp.inputs));
  if (batch.size() == 0) throw std::invalid_argument("forward: empty batch");
  const int width = rule_width(hp.rule);
  const PropCache ops(batch, hp.rule);
  const Eigen::Index rows = batch.total_nodes(), c = hp.hidden;
  const double slope = hp.leaky_slope;

  RowMat h = batch.features * p.U.transpose();
  RowMat ph(rows, c * width), z(rows, c);
  Eigen::RowVectorXd gain(c), offset(c);
  for (int l = 0; l < hp.layers; ++l) {
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const auto o = batch.offsets[k], n = batch.offsets[k + 1] - o;
      ops.at(batch.graphs[k]).apply(h.middleRows(o, n), ph.middleRows(o, n));
    }
    z.noalias() = ph * p.W[l];
    gain = (model.running_var[l].array() + hp.bn_eps).rsqrt() * p.scale[l].row(0).array();
    offset = p.shift[l].row(0).array() - model.running_mean[l].array() * gain.array();
    const auto& bias = p.b[l];
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < c; ++j) {
        double v = z(i, j) + bias(0, j);
        v = v >= 0.0 ? v : slope * v;
        v = v * gain[j] + offset[j];
        h(i, j) += v >= 0.0 ? v : slope * v;
      }
  }
  const RowMat pre = h * p.Q.transpose();
  return pre.cwiseMax(0.0) * p.P.transpose();
}

}  // namespace

Eigen::VectorXd forward(GnnModel& model, const Batch& batch, Mode mode, std::uint64_t dropout_seed,
                        ForwardCache* cache, bool update_running_stats) {
  std::vector<Eigen::RowVectorXd> mean, var;
  const bool collect = mode == Mode::Train && update_running_stats;
  Eigen::VectorXd y = forward_impl(model, batch, mode, dropout_seed, cache, collect ? &mean : nullptr,
                                   collect ? &var : nullptr);
  if (collect) {
    const double m = model.hyper.bn_momentum;
    const double n = static_cast<double>(batch.total_nodes());
    const double unbias = n > 1.0 ? n / (n - 1.0) : 1.0;
    for (std::size_t l = 0; l < mean.size(); ++l) {
      model.running_mean[l] = (1.0 - m) * model.running_mean[l] + m * mean[l];
      model.running_var[l] = (1.0 - m) * model.running_var[l] + m * unbias * var[l];
    }
  }
  return y;
}

Eigen::VectorXd forward_eval(const GnnModel& model, const Batch& batch) { return forward_eval_fused(model, batch); }

double loss(const Eigen::VectorXd& logits, const Batch& batch, Eigen::VectorXd* d_logits) {
  if (logits.size() != batch.total_nodes()) throw std::invalid_argument("loss: logits/batch size mismatch");
  const auto samples = static_cast<double>(batch.size());
  double total = 0.0;
  if (d_logits) d_logits->setZero(logits.size());
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const auto o = batch.offsets[k], n = batch.offsets[k + 1] - o;
    const auto seg = logits.segment(o, n);
    const double mx = seg.maxCoeff();
    const Eigen::VectorXd e = (seg.array() - mx).exp();
    const double z = e.sum();
    total += -(seg[batch.targets[k]] - mx - std::log(z));
    if (d_logits) {
      auto d = d_logits->segment(o, n);
      d = e / (z * samples);
      d[batch.targets[k]] -= 1.0 / samples;
    }
  }
  return total / samples;
}

GnnParameters backward(const GnnModel& model, const Batch& batch, const ForwardCache& cache,
                       const Eigen::VectorXd& d_logits) {
  const auto& hp = model.hyper;
  const auto& p = model.params;
  if (cache.layers.size() != static_cast<std::size_t>(hp.layers))
    throw std::invalid_argument("backward: cache does not match model depth");
  const int width = rule_width(hp.rule);
  const PropCache ops(batch, hp.rule);
  const bool train = cache.mode == Mode::Train;
  const auto rows = static_cast<double>(batch.total_nodes());
  GnnParameters grad = p.zeros_like();

  // Readout: y = relu(h Q^T) P^T.
  const Eigen::MatrixXd relu = cache.readout_pre.cwiseMax(0.0);
  grad.P = d_logits.transpose() * relu;
  const Eigen::MatrixXd d_pre =
      (d_logits * p.P).cwiseProduct(cache.readout_pre.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
  grad.Q = d_pre.transpose() * cache.h_final;
  Eigen::MatrixXd dh = d_pre * p.Q;

  for (int l = hp.layers - 1; l >= 0; --l) {
    const auto& c = cache.layers[l];
    const Eigen::MatrixXd ds = c.mask.size() ? Eigen::MatrixXd(dh.cwiseProduct(c.mask)) : dh;
    const Eigen::MatrixXd d_bn = ds.cwiseProduct(leaky_grad(c.bn_out, hp.leaky_slope));
    grad.scale[l] = d_bn.cwiseProduct(c.g_hat).colwise().sum();
    grad.shift[l] = d_bn.colwise().sum();
    const Eigen::MatrixXd d_ghat = d_bn.array().rowwise() * p.scale[l].row(0).array();
    Eigen::MatrixXd d_g;
    if (train) {
      const Eigen::RowVectorXd sum_d = d_ghat.colwise().sum();
      const Eigen::RowVectorXd sum_dg = d_ghat.cwiseProduct(c.g_hat).colwise().sum();
      Eigen::MatrixXd t = rows * d_ghat;
      t.rowwise() -= sum_d;
      t -= (c.g_hat.array().rowwise() * sum_dg.array()).matrix();
      d_g = (t.array().rowwise() * (c.inv_std.array() / rows)).matrix();
    } else {
      d_g = d_ghat.array().rowwise() * c.inv_std.array();
    }
    const Eigen::MatrixXd dz = d_g.cwiseProduct(leaky_grad(c.z, hp.leaky_slope));
    const Eigen::MatrixXd ph = propagate_batch(ops, batch, c.input, width);
    grad.W[l] = ph.transpose() * dz;
    grad.b[l] = dz.colwise().sum();
    const Eigen::MatrixXd d_ph = dz * p.W[l].transpose();
    dh = ds + propagate_batch_transpose(ops, batch, d_ph, width);
  }
  grad.U = dh.transpose() * batch.features;
  return grad;
}

SourceScores infer(const GnnModel& model, const Graph& g, std::span<const NodeState> states) {
  Batch b;
  b.add(g, states, 0, model.hyper.inputs);
  return SourceScores(forward_eval(model, b));
}

std::vector<SourceScores> infer_many(const GnnModel& model, const Graph& g, const std::vector<Snapshot>& snapshots,
                                     std::span<const std::size_t> ids, int chunk_size, int threads) {
  std::vector<SourceScores> out(ids.size());
  const auto chunk = static_cast<std::size_t>(std::max(1, chunk_size));
  const std::size_t chunks = (ids.size() + chunk - 1) / chunk;
  auto run = [&](std::size_t c) {
    Batch b;
    const std::size_t lo = c * chunk, hi = std::min(ids.size(), lo + chunk);
    for (std::size_t k = lo; k < hi; ++k) b.add(g, snapshots[ids[k]].states, 0, model.hyper.inputs);
    const Eigen::VectorXd y = forward_eval(model, b);
    for (std::size_t k = lo; k < hi; ++k) {
      const auto o = b.offsets[k - lo];
      out[k] = SourceScores(y.segment(o, b.offsets[k - lo + 1] - o));
    }
  };
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1) {
    for (std::size_t c = 0; c < chunks; ++c) run(c);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t c = w; c < chunks; c += workers) run(c);
      });
  }
  return out;
}

// ---------------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(const GnnParameters& like, double beta1, double beta2, double eps)
    : m_(like.zeros_like()), v_(like.zeros_like()), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(GnnParameters& params, const GnnParameters& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto p = params.tensors();
  auto g = grads.tensors();
  auto m = m_.tensors();
  auto v = v_.tensors();
  for (std::size_t k = 0; k < p.size(); ++k) {
    *m[k] = beta1_ * *m[k] + (1.0 - beta1_) * *g[k];
    *v[k] = beta2_ * *v[k] + (1.0 - beta2_) * g[k]->cwiseAbs2();
    p[k]->array() -= lr * (m[k]->array() / c1) / ((v[k]->array() / c2).sqrt() + eps_);
  }
}

bool PlateauScheduler::observe(double value) {
  if (value < best_ * (1.0 - 1e-4) || !std::isfinite(best_)) {
    best_ = value;
    bad_epochs_ = 0;
    return false;
  }
  if (++bad_epochs_ > patience_) {
    lr_ *= factor_;
    bad_epochs_ = 0;
    return true;
  }
  return false;
}

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1 || hidden < 1 || layers < 0 || patience < 0)
    throw std::invalid_argument("TrainConfig: counts must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("TrainConfig: dropout must lie in [0, 1)");
  if (!(initial_lr > 0.0)) throw std::invalid_argument("TrainConfig: initial_lr must be positive");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0))
    throw std::invalid_argument("TrainConfig: plateau_factor must lie in (0, 1)");
}

std::string TrainResult::log_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "epoch,lr,train_loss,val_loss,val_top1\n";
  for (const auto& e : log)
    os << e.epoch << ',' << e.lr << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_top1 << '\n';
  return os.str();
}

namespace {

Batch make_batch(const Graph& g, const Dataset& d, std::span<const std::size_t> ids, int channels) {
  Batch b;
  for (auto id : ids) b.add(g, d.samples[id].states, d.samples[id].source, channels);
  return b;
}

// Mean loss and top-1 accuracy of the eval-mode model on the given samples.
std::pair<double, double> evaluate_split(const GnnModel& model, const Graph& g, const Dataset& d,
                                         std::span<const std::size_t> ids, int batch_size) {
  double total = 0.0;
  std::size_t hits = 0;
  for (std::size_t lo = 0; lo < ids.size(); lo += static_cast<std::size_t>(batch_size)) {
    const auto part = ids.subspan(lo, std::min<std::size_t>(static_cast<std::size_t>(batch_size), ids.size() - lo));
    const Batch b = make_batch(g, d, part, model.hyper.inputs);
    const Eigen::VectorXd y = forward_eval(model, b);
    total += loss(y, b) * static_cast<double>(part.size());
    for (std::size_t k = 0; k < part.size(); ++k) {
      const auto o = b.offsets[k];
      hits += SourceScores(y.segment(o, b.offsets[k + 1] - o)).argmax() == b.targets[k];
    }
  }
  return {total / static_cast<double>(ids.size()), static_cast<double>(hits) / static_cast<double>(ids.size())};
}

}  // namespace

TrainResult train(const Graph& g, const Dataset& d, const TrainConfig& config, std::uint64_t seed) {
  config.validate();
  if (d.split.train.empty() || d.split.val.empty()) throw std::invalid_argument("train: empty train or val split");
  GnnHyper hp;
  hp.inputs = input_channels(d.params.model);
  hp.hidden = config.hidden;
  hp.layers = config.layers;
  hp.dropout = config.dropout;
  hp.rule = config.rule;

  TrainResult result;
  GnnModel model = GnnModel::init(hp, seed);
  AdamOptimizer adam(model.params);
  PlateauScheduler sched(config.initial_lr, config.plateau_factor, config.patience);
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order = d.split.train;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle(hash_words(seed, {0x45504f4348ULL, static_cast<std::uint64_t>(epoch)}));
    for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[shuffle.below(k)]);

    const double lr = sched.lr();
    double train_total = 0.0;
    std::size_t batch_no = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(config.batch_size), ++batch_no) {
      const auto part = std::span<const std::size_t>(order).subspan(
          lo, std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), order.size() - lo));
      const Batch b = make_batch(g, d, part, hp.inputs);
      ForwardCache cache;
      const std::uint64_t drop_seed =
          hash_words(seed, {0x44524f50ULL, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(batch_no)});
      const Eigen::VectorXd y = forward(model, b, Mode::Train, drop_seed, &cache, true);
      Eigen::VectorXd dy;
      train_total += loss(y, b, &dy) * static_cast<double>(part.size());
      adam.step(model.params, backward(model, b, cache, dy), lr);
    }
    const auto [val_loss, val_top1] = evaluate_split(model, g, d, d.split.val, config.batch_size);
    result.log.push_back({epoch, lr, train_total / static_cast<double>(order.size()), val_loss, val_top1});
    if (val_loss < best_val) {
      best_val = val_loss;
      result.model = model;
      result.best_epoch = epoch;
    }
    sched.observe(val_loss);
  }
  return result;
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'P', 'Z', 'G', 'N', 'N', 'C', 'K', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

std::uint64_t get_u64(std::string_view in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + k])) << (8 * k);
  return v;
}

struct NamedTensor {
  std::string name;
  Eigen::MatrixXd* tensor;
};

std::vector<NamedTensor> checkpoint_tensors(GnnModel& m) {
  std::vector<NamedTensor> out;
  auto names = m.params.names();
  auto ts = m.params.tensors();
  for (std::size_t k = 0; k < ts.size(); ++k) out.push_back({names[k], ts[k]});
  return out;
}

nlohmann::json hyper_json(const GnnHyper& h) {
  return {{"inputs", h.inputs},           {"hidden", h.hidden},   {"layers", h.layers},
          {"dropout", h.dropout},         {"rule", to_string(h.rule)}, {"leaky_slope", h.leaky_slope},
          {"bn_eps", h.bn_eps},           {"bn_momentum", h.bn_momentum}};
}

GnnHyper hyper_from_json(const nlohmann::json& j) {
  GnnHyper h;
  h.inputs = j.at("inputs").get<int>();
  h.hidden = j.at("hidden").get<int>();
  h.layers = j.at("layers").get<int>();
  h.dropout = j.at("dropout").get<double>();
  h.rule = propagation_rule_from_string(j.at("rule").get<std::string>());
  h.leaky_slope = j.at("leaky_slope").get<double>();
  h.bn_eps = j.at("bn_eps").get<double>();
  h.bn_momentum = j.at("bn_momentum").get<double>();
  return h;
}

}  // namespace

std::string serialize_checkpoint(const GnnModel& model, const nlohmann::json& extra) {
  GnnModel copy = model;
  auto tensors = checkpoint_tensors(copy);
  std::vector<Eigen::MatrixXd> stats;
  for (std::size_t l = 0; l < copy.running_mean.size(); ++l) {
    stats.emplace_back(copy.running_mean[l]);
    stats.emplace_back(copy.running_var[l]);
  }
  for (std::size_t l = 0; l < copy.running_mean.size(); ++l) {
    tensors.push_back({"bn_running_mean" + std::to_string(l), &stats[2 * l]});
    tensors.push_back({"bn_running_var" + std::to_string(l), &stats[2 * l + 1]});
  }

  nlohmann::json index = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& t : tensors) {
    index.push_back({{"name", t.name}, {"rows", t.tensor->rows()}, {"cols", t.tensor->cols()}, {"offset", offset}});
    offset += static_cast<std::size_t>(t.tensor->size());
  }
  nlohmann::json header = {{"version", kCheckpointVersion}, {"hyperparams", hyper_json(model.hyper)},
                           {"tensors", index}};
  if (!extra.is_null()) header["extra"] = extra;
  const std::string head = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put_u64(out, head.size());
  out += head;
  for (const auto& t : tensors)
    for (Eigen::Index i = 0; i < t.tensor->rows(); ++i)
      for (Eigen::Index j = 0; j < t.tensor->cols(); ++j) put_u64(out, std::bit_cast<std::uint64_t>((*t.tensor)(i, j)));
  return out;
}

GnnModel deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  const std::uint64_t head_len = get_u64(bytes, 8);
  if (16 + head_len > bytes.size()) throw std::runtime_error("checkpoint: truncated header");
  const auto header = nlohmann::json::parse(bytes.substr(16, head_len));
  if (header.at("version").get<int>() != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + header.at("version").dump());

  GnnModel m = GnnModel::init(hyper_from_json(header.at("hyperparams")), 0);
  std::map<std::string, Eigen::MatrixXd*> by_name;
  for (auto& t : checkpoint_tensors(m)) by_name[t.name] = t.tensor;
  std::vector<Eigen::MatrixXd> stats(2 * m.running_mean.size());
  for (std::size_t l = 0; l < m.running_mean.size(); ++l) {
    by_name["bn_running_mean" + std::to_string(l)] = &stats[2 * l];
    by_name["bn_running_var" + std::to_string(l)] = &stats[2 * l + 1];
  }

  const std::size_t payload = 16 + head_len;
  std::size_t seen = 0;
  for (const auto& entry : header.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::runtime_error("checkpoint: unexpected tensor '" + name + "'");
    const auto rows = entry.at("rows").get<Eigen::Index>(), cols = entry.at("cols").get<Eigen::Index>();
    const auto offset = entry.at("offset").get<std::size_t>();
    if (payload + 8 * (offset + static_cast<std::size_t>(rows * cols)) > bytes.size())
      throw std::runtime_error("checkpoint: truncated payload for '" + name + "'");
    Eigen::MatrixXd& t = *it->second;
    t.resize(rows, cols);
    std::size_t pos = payload + 8 * offset;
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j, pos += 8) t(i, j) = std::bit_cast<double>(get_u64(bytes, pos));
    ++seen;
  }
  if (seen != by_name.size()) throw std::runtime_error("checkpoint: missing tensors");
  for (std::size_t l = 0; l < m.running_mean.size(); ++l) {
    m.running_mean[l] = stats[2 * l];
    m.running_var[l] = stats[2 * l + 1];
  }
  return m;
}

void save_checkpoint(const GnnModel& model, const std::string& path, const nlohmann::json& extra) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  const auto bytes = serialize_checkpoint(model, extra);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

GnnModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace pzero
