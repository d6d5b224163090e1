#pragma once

#include "pzero/dataset.hpp"
#include "pzero/graph.hpp"
#include "pzero/scores.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace pzero {

// Residual graph convolutional network scoring every node as the source:
//
//   h0 = U x
//   h  <- h + leaky(BN(leaky(f(A) h W + b)))      (L layers, dropout after each add)
//   y  = P relu(Q h)
//
// Node features are stored one row per node. The snapshot time is never an
// input.

inline constexpr int kCheckpointVersion = 1;

struct GnnHyper {
  int inputs = 3;    ///< M: one-hot state channels (3 SIR, 4 SEIR, 5 CovidSeir)
  int hidden = 128;  ///< C
  int layers = 10;   ///< L
  double dropout = 0.265;
  PropagationRule rule = PropagationRule::Symmetric;
  double leaky_slope = 0.01;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
};

/// Number of one-hot channels used for an epidemic model.
int input_channels(EpidemicModel model);

/// Trainable tensors. Vectors are stored as 1 x C rows.
struct GnnParameters {
  Eigen::MatrixXd U;                   ///< C x M
  std::vector<Eigen::MatrixXd> W;      ///< per layer (width * C) x C
  std::vector<Eigen::MatrixXd> b;      ///< per layer 1 x C
  std::vector<Eigen::MatrixXd> scale;  ///< BN scale, per layer 1 x C
  std::vector<Eigen::MatrixXd> shift;  ///< BN shift, per layer 1 x C
  Eigen::MatrixXd Q;                   ///< C x C
  Eigen::MatrixXd P;                   ///< 1 x C

  /// Same shapes, all zero.
  GnnParameters zeros_like() const;

  /// Flat views in a fixed order, with names.
  std::vector<Eigen::MatrixXd*> tensors();
  std::vector<const Eigen::MatrixXd*> tensors() const;
  std::vector<std::string> names() const;

  double squared_norm() const;
};

struct GnnModel {
  GnnHyper hyper;
  GnnParameters params;
  std::vector<Eigen::RowVectorXd> running_mean, running_var;

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, identity BN.
  static GnnModel init(const GnnHyper& hyper, std::uint64_t seed);
};

/// Several snapshots laid out as one block-diagonal graph.
struct Batch {
  std::vector<const Graph*> graphs;
  std::vector<Eigen::Index> offsets{0};  ///< node offsets, size graphs + 1
  Eigen::MatrixXd features;              ///< total nodes x M, one-hot
  std::vector<NodeId> targets;           ///< local source index per graph

  std::size_t size() const noexcept { return graphs.size(); }
  Eigen::Index total_nodes() const noexcept { return offsets.back(); }

  void add(const Graph& g, std::span<const NodeState> states, NodeId target, int channels);
};

Eigen::MatrixXd one_hot(std::span<const NodeState> states, int channels);

enum class Mode { Train, Eval };

/// Intermediate values kept for the backward pass.
struct ForwardCache {
  struct Layer {
    Eigen::MatrixXd input, z, g_hat, bn_out, mask;
    Eigen::RowVectorXd inv_std;
  };
  Mode mode = Mode::Eval;
  std::vector<Layer> layers;
  Eigen::MatrixXd h_final, readout_pre;
};

/// Per-node logits for every node in the batch. In Train mode BN uses batch
/// statistics, dropout is drawn from dropout_seed, and running statistics are
/// updated when update_running_stats is set.
Eigen::VectorXd forward(GnnModel& model, const Batch& batch, Mode mode, std::uint64_t dropout_seed = 0,
                        ForwardCache* cache = nullptr, bool update_running_stats = false);

/// Eval-mode forward; the model is not modified.
Eigen::VectorXd forward_eval(const GnnModel& model, const Batch& batch);

/// Mean over graphs of -log softmax(logits within the graph)[target]. When
/// d_logits is given it receives dLoss/dlogits.
double loss(const Eigen::VectorXd& logits, const Batch& batch, Eigen::VectorXd* d_logits = nullptr);

/// Exact gradients of the loss for every trainable tensor, given the cache of
/// the forward pass that produced d_logits.
GnnParameters backward(const GnnModel& model, const Batch& batch, const ForwardCache& cache,
                       const Eigen::VectorXd& d_logits);

/// Scores for one snapshot (logits).
SourceScores infer(const GnnModel& model, const Graph& g, std::span<const NodeState> states);

/// Scores for many snapshots on one graph, evaluated chunk_size at a time.
std::vector<SourceScores> infer_many(const GnnModel& model, const Graph& g, const std::vector<Snapshot>& snapshots,
                                     std::span<const std::size_t> ids, int chunk_size = 32, int threads = 1);

// ---------------------------------------------------------------------------
// Training.

class AdamOptimizer {
 public:
  AdamOptimizer(const GnnParameters& like, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(GnnParameters& params, const GnnParameters& grads, double lr);

 private:
  GnnParameters m_, v_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

/// Multiplies the learning rate by factor once the monitored loss has not
/// improved (relative threshold 1e-4) for more than `patience` epochs.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, double factor, int patience) : lr_(lr), factor_(factor), patience_(patience) {}
  /// Returns true when the learning rate was reduced.
  bool observe(double loss);
  double lr() const noexcept { return lr_; }

 private:
  double lr_, factor_;
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_epochs_ = 0;
};

struct TrainConfig {
  int epochs = 150;
  int batch_size = 128;
  int hidden = 128;
  double dropout = 0.265;
  int layers = 10;
  double initial_lr = 0.0033;
  double plateau_factor = 0.5;
  int patience = 10;
  PropagationRule rule = PropagationRule::Symmetric;

  void validate() const;
};

struct EpochLog {
  int epoch;
  double lr, train_loss, val_loss, val_top1;
};

struct TrainResult {
  GnnModel model;  ///< best validation-loss checkpoint
  std::vector<EpochLog> log;
  int best_epoch = 0;

  /// "epoch,lr,train_loss,val_loss,val_top1" CSV with header.
  std::string log_csv() const;
};

/// Trains on d.split.train, selects on d.split.val. Deterministic given seed.
TrainResult train(const Graph& g, const Dataset& d, const TrainConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Checkpoints: 8-byte magic "PZGNNCK1", u64 little-endian header length, a
// JSON header {version, hyperparams, tensors: [{name, rows, cols, offset}]},
// then the tensors as little-endian float64, row-major.

void save_checkpoint(const GnnModel& model, const std::string& path, const nlohmann::json& extra = {});
GnnModel load_checkpoint(const std::string& path);

std::string serialize_checkpoint(const GnnModel& model, const nlohmann::json& extra = {});
GnnModel deserialize_checkpoint(std::string_view bytes);

}  // namespace pzero
