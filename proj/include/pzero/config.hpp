#pragma once

#include "pzero/epidemic.hpp"
#include "pzero/gnn.hpp"
#include "pzero/graph.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pzero {

inline constexpr int kConfigSchemaVersion = 1;

/// A config value failed validation; field() names the offending key path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct GraphSpec {
  std::string generator = "er";  ///< er | ba | rgg | edgelist
  NodeId n = 100;
  std::optional<double> p;       ///< unset: 2 ln(n) / n
  NodeId m = 1;
  std::optional<double> radius;
  std::optional<std::size_t> target_edges;
  bool require_connected = true;
  std::string path;
};

struct EpidemicSpec {
  EpidemicModel model = EpidemicModel::SIR;
  std::optional<double> r0 = 2.5;  ///< cleared when only beta is given
  std::optional<double> beta;
  double gamma = 0.4;
  double alpha = 0.5;
  double p_a = 0.5;
  double r_a = 0.5;
  bool covid_preset = false;
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string output_dir = "out";
  GraphSpec graph;
  EpidemicSpec epidemic;
  std::size_t n_samples = 20000;
  int T = 30;
  std::vector<std::string> methods{"dmp", "gnn"};
  TrainConfig train;
  int bucket_width = 1;
  bool dmp_scan_t = false;
  /// Snapshots timed by `bench`; 0 means the whole test split.
  std::size_t bench_samples = 100;

  /// Field-level validation; throws ConfigError.
  void validate() const;

  nlohmann::json to_json() const;
  /// Stable 16-hex-digit FNV-1a hash of the canonical JSON form.
  std::string hash() const;
};

/// Parses and validates; unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

/// Builds the graph the config describes (seeded from the config seed).
Graph build_graph(const GraphSpec& spec, std::uint64_t seed);

/// Resolves epidemic parameters; beta = r0 gamma / lambda_1 when r0 is given.
EpidemicParams resolve_params(const EpidemicSpec& spec, const Graph& g);

std::string fnv1a_hex(std::string_view data);

}  // namespace pzero
