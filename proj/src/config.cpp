#include "pzero/config.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

namespace pzero {

std::string fnv1a_hex(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

void reject_unknown(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where.empty() ? "<root>" : where, "expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.contains(key)) throw ConfigError(where.empty() ? key : where + "." + key, "unknown field");
}

template <typename T>
void read(const nlohmann::json& j, const std::string& where, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where.empty() ? key : where + "." + key, std::string("wrong type (") + e.what() + ")");
  }
}

template <typename T>
void read(const nlohmann::json& j, const std::string& where, const char* key, std::optional<T>& out) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  T v{};
  read(j, where, key, v);
  out = v;
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  reject_unknown(j, "", {"schema_version", "seed", "threads", "output_dir", "graph", "epidemic", "dataset", "methods",
                         "train", "evaluation", "bench"});
  read(j, "", "schema_version", c.schema_version);
  if (c.schema_version != kConfigSchemaVersion)
    throw ConfigError("schema_version", "unsupported version " + std::to_string(c.schema_version));
  read(j, "", "seed", c.seed);
  read(j, "", "threads", c.threads);
  read(j, "", "output_dir", c.output_dir);
  read(j, "", "methods", c.methods);

  if (j.contains("graph")) {
    const auto& g = j.at("graph");
    reject_unknown(g, "graph", {"generator", "n", "p", "m", "radius", "target_edges", "require_connected", "path"});
    read(g, "graph", "generator", c.graph.generator);
    read(g, "graph", "n", c.graph.n);
    if (g.contains("p") && g.at("p").is_string()) {
      if (g.at("p").get<std::string>() != "auto") throw ConfigError("graph.p", "expected a number or \"auto\"");
    } else {
      read(g, "graph", "p", c.graph.p);
    }
    read(g, "graph", "m", c.graph.m);
    read(g, "graph", "radius", c.graph.radius);
    read(g, "graph", "target_edges", c.graph.target_edges);
    read(g, "graph", "require_connected", c.graph.require_connected);
    read(g, "graph", "path", c.graph.path);
  }
  if (j.contains("epidemic")) {
    const auto& e = j.at("epidemic");
    reject_unknown(e, "epidemic", {"model", "r0", "beta", "gamma", "alpha", "p_a", "r_a", "preset"});
    std::string model = to_string(c.epidemic.model);
    read(e, "epidemic", "model", model);
    try {
      c.epidemic.model = epidemic_model_from_string(model);
    } catch (const std::invalid_argument& ex) {
      throw ConfigError("epidemic.model", ex.what());
    }
    if (e.contains("beta") && !e.contains("r0")) c.epidemic.r0.reset();
    read(e, "epidemic", "r0", c.epidemic.r0);
    read(e, "epidemic", "beta", c.epidemic.beta);
    read(e, "epidemic", "gamma", c.epidemic.gamma);
    read(e, "epidemic", "alpha", c.epidemic.alpha);
    read(e, "epidemic", "p_a", c.epidemic.p_a);
    read(e, "epidemic", "r_a", c.epidemic.r_a);
    std::string preset;
    read(e, "epidemic", "preset", preset);
    if (!preset.empty() && preset != "covid") throw ConfigError("epidemic.preset", "unknown preset '" + preset + "'");
    c.epidemic.covid_preset = preset == "covid";
  }
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    reject_unknown(d, "dataset", {"n_samples", "T"});
    read(d, "dataset", "n_samples", c.n_samples);
    read(d, "dataset", "T", c.T);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    reject_unknown(t, "train", {"epochs", "batch_size", "hidden", "dropout", "layers", "initial_lr", "plateau_factor",
                                "patience", "rule"});
    read(t, "train", "epochs", c.train.epochs);
    read(t, "train", "batch_size", c.train.batch_size);
    read(t, "train", "hidden", c.train.hidden);
    read(t, "train", "dropout", c.train.dropout);
    read(t, "train", "layers", c.train.layers);
    read(t, "train", "initial_lr", c.train.initial_lr);
    read(t, "train", "plateau_factor", c.train.plateau_factor);
    read(t, "train", "patience", c.train.patience);
    std::string rule = to_string(c.train.rule);
    read(t, "train", "rule", rule);
    try {
      c.train.rule = propagation_rule_from_string(rule);
    } catch (const std::invalid_argument& ex) {
      throw ConfigError("train.rule", ex.what());
    }
  }
  if (j.contains("evaluation")) {
    const auto& e = j.at("evaluation");
    reject_unknown(e, "evaluation", {"bucket_width", "dmp_scan_t"});
    read(e, "evaluation", "bucket_width", c.bucket_width);
    read(e, "evaluation", "dmp_scan_t", c.dmp_scan_t);
  }
  if (j.contains("bench")) {
    const auto& b = j.at("bench");
    reject_unknown(b, "bench", {"samples"});
    read(b, "bench", "samples", c.bench_samples);
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("<file>", e.what());
  }
  return config_from_json(j);
}

void ExperimentConfig::validate() const {
  if (threads < 1) throw ConfigError("threads", "must be >= 1");
  static const std::set<std::string> generators{"er", "ba", "rgg", "edgelist"};
  if (!generators.contains(graph.generator)) throw ConfigError("graph.generator", "unknown generator '" + graph.generator + "'");
  if (graph.generator == "edgelist") {
    if (graph.path.empty()) throw ConfigError("graph.path", "required for the edgelist generator");
    if (!std::filesystem::exists(graph.path)) throw ConfigError("graph.path", "file '" + graph.path + "' does not exist");
  } else if (graph.n < 2) {
    throw ConfigError("graph.n", "must be >= 2");
  }
  if (graph.p && !(*graph.p > 0.0 && *graph.p <= 1.0)) throw ConfigError("graph.p", "must lie in (0, 1]");
  if (graph.generator == "ba" && (graph.m < 1 || graph.m >= graph.n)) throw ConfigError("graph.m", "require 1 <= m < n");
  if (graph.generator == "rgg" && !graph.radius && !graph.target_edges)
    throw ConfigError("graph.radius", "rgg needs radius or target_edges");
  if (graph.radius && !(*graph.radius > 0.0 && *graph.radius < 1.0)) throw ConfigError("graph.radius", "must lie in (0, 1)");

  if (!epidemic.covid_preset) {
    if (epidemic.r0.has_value() == epidemic.beta.has_value())
      throw ConfigError("epidemic.r0", "exactly one of r0 and beta must be given");
    if (epidemic.r0 && !(*epidemic.r0 > 0.0)) throw ConfigError("epidemic.r0", "must be positive");
    if (epidemic.beta && !(*epidemic.beta >= 0.0 && *epidemic.beta <= 1.0))
      throw ConfigError("epidemic.beta", "must lie in [0, 1]");
  }
  auto prob = [](double v, const char* field) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(field, "must lie in [0, 1]");
  };
  prob(epidemic.gamma, "epidemic.gamma");
  prob(epidemic.alpha, "epidemic.alpha");
  prob(epidemic.p_a, "epidemic.p_a");
  prob(epidemic.r_a, "epidemic.r_a");

  if (n_samples < 1) throw ConfigError("dataset.n_samples", "must be >= 1");
  if (T < 1) throw ConfigError("dataset.T", "must be >= 1");
  static const std::set<std::string> known{"dmp", "gnn", "rumor", "distance"};
  for (const auto& m : methods)
    if (!known.contains(m)) throw ConfigError("methods", "unknown method '" + m + "'");
  try {
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("train", e.what());
  }
  if (bucket_width < 1) throw ConfigError("evaluation.bucket_width", "must be >= 1");
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json g = {{"generator", graph.generator}, {"n", graph.n}, {"m", graph.m},
                      {"require_connected", graph.require_connected}, {"path", graph.path}};
  g["p"] = graph.p ? nlohmann::json(*graph.p) : nlohmann::json("auto");
  if (graph.radius) g["radius"] = *graph.radius;
  if (graph.target_edges) g["target_edges"] = *graph.target_edges;
  nlohmann::json e = {{"model", pzero::to_string(epidemic.model)}, {"gamma", epidemic.gamma}, {"alpha", epidemic.alpha},
                      {"p_a", epidemic.p_a}, {"r_a", epidemic.r_a}};
  if (epidemic.r0) e["r0"] = *epidemic.r0;
  if (epidemic.beta) e["beta"] = *epidemic.beta;
  if (epidemic.covid_preset) e["preset"] = "covid";
  return {{"schema_version", schema_version},
          {"seed", seed},
          {"threads", threads},
          {"output_dir", output_dir},
          {"graph", g},
          {"epidemic", e},
          {"dataset", {{"n_samples", n_samples}, {"T", T}}},
          {"methods", methods},
          {"train",
           {{"epochs", train.epochs},
            {"batch_size", train.batch_size},
            {"hidden", train.hidden},
            {"dropout", train.dropout},
            {"layers", train.layers},
            {"initial_lr", train.initial_lr},
            {"plateau_factor", train.plateau_factor},
            {"patience", train.patience},
            {"rule", pzero::to_string(train.rule)}}},
          {"evaluation", {{"bucket_width", bucket_width}, {"dmp_scan_t", dmp_scan_t}}},
          {"bench", {{"samples", bench_samples}}}};
}

std::string ExperimentConfig::hash() const {
  // threads and output_dir do not change artifacts.
  auto j = to_json();
  j.erase("threads");
  j.erase("output_dir");
  return fnv1a_hex(j.dump());
}

Graph build_graph(const GraphSpec& spec, std::uint64_t seed) {
  if (spec.generator == "er") {
    const double p = spec.p.value_or(2.0 * std::log(static_cast<double>(spec.n)) / spec.n);
    return generate_er(spec.n, p, seed, spec.require_connected);
  }
  if (spec.generator == "ba") return generate_ba(spec.n, spec.m, seed);
  if (spec.generator == "rgg") {
    if (spec.radius) return generate_rgg(spec.n, *spec.radius, seed, spec.require_connected);
    for (int attempt = 0; attempt < kMaxConnectAttempts; ++attempt) {
      const std::uint64_t s = seed + static_cast<std::uint64_t>(attempt);
      const double r = tune_rgg_radius(spec.n, *spec.target_edges, s);
      Graph g = generate_rgg(spec.n, std::min(r, std::nextafter(1.0, 0.0)), s, false);
      if (!spec.require_connected || is_connected(g)) return g;
    }
    throw std::runtime_error("generate_rgg: no connected instance after " + std::to_string(kMaxConnectAttempts) +
                             " attempts");
  }
  if (spec.generator == "edgelist") return load_edge_list(spec.path).graph;
  throw ConfigError("graph.generator", "unknown generator '" + spec.generator + "'");
}

EpidemicParams resolve_params(const EpidemicSpec& spec, const Graph& g) {
  if (spec.covid_preset) return EpidemicParams::covid_preset();
  EpidemicParams p;
  p.model = spec.model;
  p.gamma = spec.gamma;
  p.alpha = spec.alpha;
  p.p_a = spec.p_a;
  p.r_a = spec.r_a;
  if (spec.beta) {
    p.beta = *spec.beta;
  } else if (spec.model == EpidemicModel::CovidSeir) {
    // r0 = (1 - p_a + r_a p_a) <k> lambda / gamma
    const double mean_degree = 2.0 * static_cast<double>(g.num_edges()) / g.num_nodes();
    p.beta = *spec.r0 * spec.gamma / ((1.0 - spec.p_a + spec.r_a * spec.p_a) * mean_degree);
  } else {
    p.beta = *spec.r0 * spec.gamma / leading_eigenvalue(g);
  }
  p.validate();
  return p;
}

}  // namespace pzero
