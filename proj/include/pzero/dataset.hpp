#pragma once

#include "pzero/epidemic.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pzero {

inline constexpr int kDatasetFormatVersion = 1;

/// Index lists into Dataset::samples.
struct Split {
  std::vector<std::size_t> train, val, test;
};

struct Dataset {
  std::string graph_id;
  EpidemicParams params;
  int T = 0;
  std::uint64_t seed = 0;
  std::vector<Snapshot> samples;
  Split split;
};

/// Seed of sample `index`: a hash of the dataset seed and the index.
std::uint64_t sample_seed(std::uint64_t dataset_seed, std::size_t index);

/// 80-10-10 split by index after a seeded Fisher-Yates shuffle.
Split make_split(std::size_t n_samples, std::uint64_t seed);

/// Each sample draws its source uniformly over nodes and t uniformly from
/// 1..T, then simulates up to t. threads > 1 spreads samples over workers;
/// the output does not depend on the thread count.
Dataset generate_dataset(const Graph& g, const EpidemicParams& params, std::size_t n_samples, int T,
                         std::uint64_t seed, const std::string& graph_id = "graph", int threads = 1);

// ---------------------------------------------------------------------------
// Serialization. A dataset is a JSON Lines file (one snapshot per line, after
// one header line) plus a manifest JSON with params and split indices.

/// Run-length encoding over the letters S E I A R, e.g. "3S1I2R".
std::string encode_states(std::span<const NodeState> states);
States decode_states(std::string_view rle);

nlohmann::json snapshot_to_json(const Snapshot& s);
Snapshot snapshot_from_json(const nlohmann::json& j);

nlohmann::json params_to_json(const EpidemicParams& p);
EpidemicParams params_from_json(const nlohmann::json& j);

nlohmann::json manifest_json(const Dataset& d, const std::string& config_hash);

/// Writes <dir>/dataset.jsonl and <dir>/manifest.json.
void save_dataset(const Dataset& d, const std::string& dir, const std::string& config_hash);
Dataset load_dataset(const std::string& dir);

/// Reads a JSON Lines file of snapshots, skipping header lines.
std::vector<Snapshot> read_snapshots(const std::string& path);

}  // namespace pzero
