#include "pzero/dataset.hpp"

#include "pzero/errors.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace pzero {

std::uint64_t sample_seed(std::uint64_t dataset_seed, std::size_t index) {
  return hash_words(dataset_seed, {0x53414d50ULL, static_cast<std::uint64_t>(index)});
}

Split make_split(std::size_t n_samples, std::uint64_t seed) {
  std::vector<std::size_t> idx(n_samples);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(hash_words(seed, {0x53504c4954ULL}));
  for (std::size_t k = n_samples; k > 1; --k) std::swap(idx[k - 1], idx[rng.below(k)]);
  const std::size_t n_train = n_samples * 8 / 10;
  const std::size_t n_val = n_samples / 10;
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train),
               idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), idx.end());
  return s;
}

Dataset generate_dataset(const Graph& g, const EpidemicParams& params, std::size_t n_samples, int T,
                         std::uint64_t seed, const std::string& graph_id, int threads) {
  if (n_samples < 1) throw std::invalid_argument("generate_dataset: n_samples must be >= 1");
  if (T < 1) throw std::invalid_argument("generate_dataset: T must be >= 1");
  params.validate();

  Dataset d;
  d.graph_id = graph_id;
  d.params = params;
  d.T = T;
  d.seed = seed;
  d.samples.resize(n_samples);

  auto make = [&](std::size_t k) {
    const std::uint64_t s = sample_seed(seed, k);
    Rng rng(s);
    const auto source = static_cast<NodeId>(rng.below(static_cast<std::uint64_t>(g.num_nodes())));
    const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(T)));
    d.samples[k] = run_episode(g, params, source, t, t, s, false, graph_id).snapshot;
  };

  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1) {
    for (std::size_t k = 0; k < n_samples; ++k) make(k);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t k = w; k < n_samples; k += workers) make(k);
      });
  }
  d.split = make_split(n_samples, seed);
  return d;
}

// ---------------------------------------------------------------------------

std::string encode_states(std::span<const NodeState> states) {
  std::string out;
  std::size_t i = 0;
  while (i < states.size()) {
    std::size_t j = i;
    while (j < states.size() && states[j] == states[i]) ++j;
    out += std::to_string(j - i);
    out += state_letter(states[i]);
    i = j;
  }
  return out;
}

States decode_states(std::string_view rle) {
  States out;
  std::size_t count = 0;
  bool have_digits = false;
  for (char c : rle) {
    if (c >= '0' && c <= '9') {
      count = count * 10 + static_cast<std::size_t>(c - '0');
      have_digits = true;
      continue;
    }
    if (!have_digits) throw std::invalid_argument("decode_states: run without a count");
    if (count == 0) throw std::invalid_argument("decode_states: zero-length run");
    out.insert(out.end(), count, state_from_letter(c));
    count = 0;
    have_digits = false;
  }
  if (have_digits) throw std::invalid_argument("decode_states: trailing count without a state letter");
  return out;
}

nlohmann::json snapshot_to_json(const Snapshot& s) {
  return {{"graph_id", s.graph_id}, {"t", s.t}, {"source", s.source}, {"states", encode_states(s.states)},
          {"seed", s.seed}};
}

Snapshot snapshot_from_json(const nlohmann::json& j) {
  Snapshot s;
  s.graph_id = j.value("graph_id", "");
  s.t = j.at("t").get<int>();
  s.source = j.at("source").get<NodeId>();
  s.states = decode_states(j.at("states").get<std::string>());
  s.seed = j.value("seed", std::uint64_t{0});
  return s;
}

nlohmann::json params_to_json(const EpidemicParams& p) {
  return {{"model", to_string(p.model)}, {"beta", p.beta}, {"gamma", p.gamma},
          {"alpha", p.alpha},            {"p_a", p.p_a},   {"r_a", p.r_a}};
}

EpidemicParams params_from_json(const nlohmann::json& j) {
  EpidemicParams p;
  p.model = epidemic_model_from_string(j.value("model", "sir"));
  p.beta = j.at("beta").get<double>();
  p.gamma = j.value("gamma", p.gamma);
  p.alpha = j.value("alpha", p.alpha);
  p.p_a = j.value("p_a", p.p_a);
  p.r_a = j.value("r_a", p.r_a);
  p.validate();
  return p;
}

nlohmann::json manifest_json(const Dataset& d, const std::string& config_hash) {
  return {{"format_version", kDatasetFormatVersion},
          {"config_hash", config_hash},
          {"graph_id", d.graph_id},
          {"params", params_to_json(d.params)},
          {"T", d.T},
          {"seed", d.seed},
          {"n_samples", d.samples.size()},
          {"split", {{"train", d.split.train}, {"val", d.split.val}, {"test", d.split.test}}}};
}

void save_dataset(const Dataset& d, const std::string& dir, const std::string& config_hash) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(std::filesystem::path(dir) / "dataset.jsonl");
    if (!out) throw std::runtime_error("cannot write dataset in '" + dir + "'");
    out << nlohmann::json{{"header", {{"format_version", kDatasetFormatVersion},
                                      {"config_hash", config_hash},
                                      {"seed", d.seed}}}}
               .dump()
        << '\n';
    for (const auto& s : d.samples) out << snapshot_to_json(s).dump() << '\n';
  }
  std::ofstream man(std::filesystem::path(dir) / "manifest.json");
  if (!man) throw std::runtime_error("cannot write manifest in '" + dir + "'");
  man << manifest_json(d, config_hash).dump(2) << '\n';
}

std::vector<Snapshot> read_snapshots(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<Snapshot> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      if (j.contains("header")) continue;
      out.push_back(snapshot_from_json(j));
    } catch (const std::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return out;
}

Dataset load_dataset(const std::string& dir) {
  const auto root = std::filesystem::path(dir);
  std::ifstream man_in(root / "manifest.json");
  if (!man_in) throw std::runtime_error("cannot open manifest in '" + dir + "'");
  const auto man = nlohmann::json::parse(man_in);
  if (man.value("format_version", 0) != kDatasetFormatVersion)
    throw std::runtime_error("unsupported dataset format version");
  Dataset d;
  d.graph_id = man.value("graph_id", "");
  d.params = params_from_json(man.at("params"));
  d.T = man.at("T").get<int>();
  d.seed = man.at("seed").get<std::uint64_t>();
  d.samples = read_snapshots((root / "dataset.jsonl").string());
  const auto& sp = man.at("split");
  d.split.train = sp.at("train").get<std::vector<std::size_t>>();
  d.split.val = sp.at("val").get<std::vector<std::size_t>>();
  d.split.test = sp.at("test").get<std::vector<std::size_t>>();
  for (const auto* part : {&d.split.train, &d.split.val, &d.split.test})
    for (auto k : *part)
      if (k >= d.samples.size()) throw std::runtime_error("manifest split index out of range");
  return d;
}

}  // namespace pzero
