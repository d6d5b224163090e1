#include "pzero/config.hpp"
#include "pzero/dataset.hpp"
#include "pzero/dmp.hpp"
#include "pzero/errors.hpp"
#include "pzero/gnn.hpp"
#include "pzero/limits.hpp"
#include "pzero/metrics.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace pzero;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitRuntime = 4;
constexpr int kPredictionFormatVersion = 1;
constexpr const char* kToolVersion = "0.1.0";

// Options shared by every subcommand. Values given on the command line win
// over the config file.
struct Common {
  std::string config_path;
  std::uint64_t seed = 0;
  int threads = 1;
  bool no_timing = false;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* threads_opt = nullptr;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  c.seed_opt = app->add_option("--seed", c.seed, "top-level seed");
  c.threads_opt = app->add_option("--threads", c.threads, "worker threads (1 = reproducible mode)")->check(CLI::PositiveNumber);
  app->add_flag("--no-timing", c.no_timing, "write runtime_ms as 0 so reruns are byte-identical");
}

ExperimentConfig base_config(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : load_config(c.config_path);
  if (c.seed_opt->count()) cfg.seed = c.seed;
  if (c.threads_opt->count()) cfg.threads = c.threads;
  return cfg;
}

void finish_config(ExperimentConfig& cfg) { cfg.validate(); }

std::string header_comment(const ExperimentConfig& cfg) {
  return "# config_hash=" + cfg.hash() + " seed=" + std::to_string(cfg.seed) + "\n";
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

json graph_artifact(const Graph& g, const ExperimentConfig& cfg) {
  json j = to_json(g);
  j["config_hash"] = cfg.hash();
  j["seed"] = cfg.seed;
  return j;
}

Graph load_graph_for(const std::string& graph_path, const std::string& data_dir) {
  if (!graph_path.empty()) return load_graph(graph_path);
  const auto p = fs::path(data_dir) / "graph.json";
  if (!fs::exists(p)) throw std::runtime_error("no graph given and '" + p.string() + "' does not exist");
  return load_graph(p.string());
}

std::vector<std::size_t> select_ids(const Dataset& d, const std::string& split, std::size_t limit) {
  std::vector<std::size_t> ids;
  if (split == "test") ids = d.split.test;
  else if (split == "val") ids = d.split.val;
  else if (split == "train") ids = d.split.train;
  else for (std::size_t k = 0; k < d.samples.size(); ++k) ids.push_back(k);
  if (limit > 0 && ids.size() > limit) ids.resize(limit);
  return ids;
}

json scores_json(const SourceScores& s) {
  json arr = json::array();
  for (NodeId i = 0; i < s.size(); ++i) arr.push_back(std::isfinite(s[i]) ? json(s[i]) : json(nullptr));
  return arr;
}

SourceScores scores_from_json(const json& arr) {
  SourceScores s(static_cast<NodeId>(arr.size()));
  for (NodeId i = 0; i < s.size(); ++i)
    if (!arr[i].is_null()) s[i] = arr[i].get<double>();
  return s;
}

struct PredictionFile {
  std::string method;
  std::map<std::size_t, Prediction> predictions;
};

std::string predictions_jsonl(const ExperimentConfig& cfg, const std::string& method,
                              const std::vector<Prediction>& preds) {
  std::ostringstream os;
  os << json{{"header",
              {{"format_version", kPredictionFormatVersion},
               {"config_hash", cfg.hash()},
               {"seed", cfg.seed},
               {"method", method}}}}
            .dump()
     << '\n';
  for (const auto& p : preds) {
    json top = json::array();
    for (NodeId v : p.scores.ranking(std::min<NodeId>(20, p.scores.size()))) top.push_back(v);
    os << json{{"sample_id", p.sample_id},
               {"argmax", p.scores.argmax()},
               {"top_k", top},
               {"scores", scores_json(p.scores)},
               {"runtime_ms", p.runtime_ms}}
              .dump()
       << '\n';
  }
  return os.str();
}

PredictionFile read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  PredictionFile f;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      if (j.contains("header")) {
        f.method = j["header"].value("method", "");
        continue;
      }
      Prediction p;
      p.sample_id = j.at("sample_id").get<std::size_t>();
      p.scores = scores_from_json(j.at("scores"));
      p.runtime_ms = j.value("runtime_ms", 0.0);
      f.predictions[p.sample_id] = std::move(p);
    } catch (const std::exception& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return f;
}

template <typename F>
double timed_ms(bool no_timing, F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return no_timing ? 0.0 : ms;
}

// ---------------------------------------------------------------------------

struct GraphArgs {
  Common common;
  std::string generator, p, out = "graph.json", edge_list_out;
  NodeId n = 0, m = 0;
  double radius = 0.0;
  std::size_t target_edges = 0;
  CLI::Option *gen_opt, *n_opt, *p_opt, *m_opt, *radius_opt, *target_opt;
};

void apply_graph_flags(GraphArgs& a, ExperimentConfig& cfg) {
  if (a.gen_opt->count()) cfg.graph.generator = a.generator;
  if (a.n_opt->count()) cfg.graph.n = a.n;
  if (a.p_opt->count()) {
    if (a.p == "auto") {
      cfg.graph.p.reset();
    } else {
      try {
        cfg.graph.p = std::stod(a.p);
      } catch (const std::exception&) {
        throw ConfigError("graph.p", "expected a number or \"auto\"");
      }
    }
  }
  if (a.m_opt->count()) cfg.graph.m = a.m;
  if (a.radius_opt->count()) cfg.graph.radius = a.radius;
  if (a.target_opt->count()) cfg.graph.target_edges = a.target_edges;
}

int run_generate_graph(GraphArgs& a) {
  ExperimentConfig cfg = base_config(a.common);
  apply_graph_flags(a, cfg);
  finish_config(cfg);
  const Graph g = build_graph(cfg.graph, cfg.seed);
  write_text(a.out, graph_artifact(g, cfg).dump() + "\n");
  if (!a.edge_list_out.empty()) write_edge_list(g, a.edge_list_out);
  std::cout << "wrote " << a.out << " (n=" << g.num_nodes() << ", edges=" << g.num_edges() << ")\n";
  return 0;
}

struct SimulateArgs {
  GraphArgs graph;
  std::string graph_path, out = "data", preset, model;
  double r0 = 0, beta = 0, gamma = 0, alpha = 0;
  std::size_t n_samples = 0;
  int T = 0;
  CLI::Option *r0_opt, *beta_opt, *gamma_opt, *alpha_opt, *model_opt, *n_opt, *T_opt;
};

void apply_epidemic_flags(SimulateArgs& a, ExperimentConfig& cfg) {
  if (a.r0_opt->count() && a.beta_opt->count()) throw ConfigError("epidemic.r0", "give either --r0 or --beta");
  if (a.r0_opt->count()) {
    cfg.epidemic.r0 = a.r0;
    cfg.epidemic.beta.reset();
  }
  if (a.beta_opt->count()) {
    cfg.epidemic.beta = a.beta;
    cfg.epidemic.r0.reset();
  }
  if (a.gamma_opt->count()) cfg.epidemic.gamma = a.gamma;
  if (a.alpha_opt->count()) cfg.epidemic.alpha = a.alpha;
  if (a.model_opt->count()) {
    try {
      cfg.epidemic.model = epidemic_model_from_string(a.model);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("epidemic.model", e.what());
    }
  }
  if (!a.preset.empty()) {
    if (a.preset != "covid") throw ConfigError("epidemic.preset", "unknown preset '" + a.preset + "'");
    cfg.epidemic.covid_preset = true;
    cfg.epidemic.model = EpidemicModel::CovidSeir;
  }
  if (a.n_opt->count()) cfg.n_samples = a.n_samples;
  if (a.T_opt->count()) cfg.T = a.T;
}

int run_simulate(SimulateArgs& a) {
  ExperimentConfig cfg = base_config(a.graph.common);
  apply_graph_flags(a.graph, cfg);
  apply_epidemic_flags(a, cfg);
  finish_config(cfg);
  const Graph g = a.graph_path.empty() ? build_graph(cfg.graph, cfg.seed) : load_graph(a.graph_path);
  const EpidemicParams params = resolve_params(cfg.epidemic, g);
  const Dataset d = generate_dataset(g, params, cfg.n_samples, cfg.T, cfg.seed, "graph", cfg.threads);
  save_dataset(d, a.out, cfg.hash());
  write_text(fs::path(a.out) / "graph.json", graph_artifact(g, cfg).dump() + "\n");
  std::cout << "wrote " << d.samples.size() << " snapshots to " << a.out << " (" << to_string(params.model)
            << ", beta=" << params.beta << ", gamma=" << params.gamma << ")\n";
  return 0;
}

struct BoundsArgs {
  Common common;
  NodeId n = 100;
  std::string p = "auto";
  double gamma = 0.4;
  std::vector<double> r0{2.5, 5.0, 10.0};
  double t_end = 30.0, t_step = 1.0;
  std::string out;
};

int run_bounds(BoundsArgs& a) {
  ExperimentConfig cfg = base_config(a.common);
  cfg.graph.n = a.n;
  cfg.epidemic.gamma = a.gamma;
  double p = 2.0 * std::log(static_cast<double>(a.n)) / a.n;
  if (a.p != "auto") {
    try {
      p = std::stod(a.p);
    } catch (const std::exception&) {
      throw ConfigError("p", "expected a number or \"auto\"");
    }
    cfg.graph.p = p;
  }
  if (!(a.t_step > 0.0) || a.t_end < 0.0) throw ConfigError("t-grid", "need t-step > 0 and t-end >= 0");
  finish_config(cfg);
  std::vector<double> grid;
  for (int k = 0; k * a.t_step <= a.t_end + 1e-12; ++k) grid.push_back(k * a.t_step);

  // The hash covers the bounds inputs, which live outside ExperimentConfig.
  const json inputs = {{"n", a.n}, {"p", p}, {"gamma", a.gamma}, {"r0", a.r0}, {"t_end", a.t_end}, {"t_step", a.t_step}};
  std::ostringstream os;
  os << "# config_hash=" << fnv1a_hex(inputs.dump()) << " seed=" << cfg.seed << "\n";
  os << "r0,t,expected_gi,p_max\n";
  for (double r0 : a.r0) {
    try {
      os << bound_curve(a.n, p, a.gamma, r0, grid).csv_rows();
    } catch (const std::domain_error& e) {
      throw ConfigError("r0", e.what());
    }
  }
  if (a.out.empty()) std::cout << os.str();
  else write_text(a.out, os.str());
  return 0;
}

struct TrainArgs {
  Common common;
  std::string data = "data", graph_path, out = "model";
  int epochs = 0, hidden = 0, layers = 0, batch_size = 0;
  std::string rule;
  CLI::Option *epochs_opt, *hidden_opt, *layers_opt, *batch_opt, *rule_opt;
};

int run_train(TrainArgs& a) {
  ExperimentConfig cfg = base_config(a.common);
  if (a.epochs_opt->count()) cfg.train.epochs = a.epochs;
  if (a.hidden_opt->count()) cfg.train.hidden = a.hidden;
  if (a.layers_opt->count()) cfg.train.layers = a.layers;
  if (a.batch_opt->count()) cfg.train.batch_size = a.batch_size;
  if (a.rule_opt->count()) {
    try {
      cfg.train.rule = propagation_rule_from_string(a.rule);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("train.rule", e.what());
    }
  }
  finish_config(cfg);
  const Dataset d = load_dataset(a.data);
  const Graph g = load_graph_for(a.graph_path, a.data);
  const TrainResult r = train(g, d, cfg.train, cfg.seed);
  fs::create_directories(a.out);
  save_checkpoint(r.model, (fs::path(a.out) / "model.ckpt").string(),
                  {{"config_hash", cfg.hash()}, {"seed", cfg.seed}, {"best_epoch", r.best_epoch}});
  write_text(fs::path(a.out) / "train_log.csv", header_comment(cfg) + r.log_csv());
  std::cout << "best epoch " << r.best_epoch << ", checkpoint in " << a.out << "\n";
  return 0;
}

struct InferArgs {
  Common common;
  std::string data = "data", graph_path, out, split = "test", checkpoint;
  std::size_t limit = 0;
  bool scan = false, full = false;
  int chunk = 32;
};

int run_infer_dmp(InferArgs& a) {
  ExperimentConfig cfg = base_config(a.common);
  finish_config(cfg);
  const Dataset d = load_dataset(a.data);
  if (d.params.model != EpidemicModel::SIR) throw UnsupportedModel("infer-dmp: DMP supports SIR snapshots only");
  const Graph g = load_graph_for(a.graph_path, a.data);
  const auto ids = select_ids(d, a.split, a.limit);
  DmpOptions opts;
  opts.prune_candidates = !a.full;
  opts.threads = cfg.threads;
  const bool scan = a.scan || cfg.dmp_scan_t;
  std::vector<Prediction> preds;
  for (auto id : ids) {
    const auto& s = d.samples[id];
    Prediction p;
    p.sample_id = id;
    p.runtime_ms = timed_ms(a.common.no_timing, [&] {
      p.scores = scan ? dmp_infer_scan(g, d.params, s.states, d.T, opts) : dmp_infer(g, d.params, s.states, s.t, opts);
    });
    preds.push_back(std::move(p));
  }
  const std::string out = a.out.empty() ? (fs::path(a.data) / "pred_dmp.jsonl").string() : a.out;
  write_text(out, predictions_jsonl(cfg, "dmp", preds));
  std::cout << "wrote " << preds.size() << " predictions to " << out << "\n";
  return 0;
}

int run_infer_gnn(InferArgs& a) {
  ExperimentConfig cfg = base_config(a.common);
  finish_config(cfg);
  const Dataset d = load_dataset(a.data);
  const Graph g = load_graph_for(a.graph_path, a.data);
  const GnnModel model = load_checkpoint(a.checkpoint);
  if (model.hyper.inputs != input_channels(d.params.model))
    throw std::runtime_error("checkpoint input channels do not match the dataset's epidemic model");
  const auto ids = select_ids(d, a.split, a.limit);
  std::vector<SourceScores> scores;
  const double ms = timed_ms(a.common.no_timing, [&] { scores = infer_many(model, g, d.samples, ids, a.chunk, cfg.threads); });
  std::vector<Prediction> preds;
  for (std::size_t k = 0; k < ids.size(); ++k)
    preds.push_back({ids[k], std::move(scores[k]), ids.empty() ? 0.0 : ms / static_cast<double>(ids.size())});
  const std::string out = a.out.empty() ? (fs::path(a.data) / "pred_gnn.jsonl").string() : a.out;
  write_text(out, predictions_jsonl(cfg, "gnn", preds));
  std::cout << "wrote " << preds.size() << " predictions to " << out << "\n";
  return 0;
}

struct EvaluateArgs {
  Common common;
  std::string data = "data", graph_path, out, split = "test";
  std::vector<std::string> predictions, baselines;
  std::size_t limit = 0;
};

int run_evaluate(EvaluateArgs& a) {
  ExperimentConfig cfg = base_config(a.common);
  finish_config(cfg);
  if (a.predictions.empty() && a.baselines.empty())
    throw ConfigError("evaluate", "give at least one --predictions file or --baseline");
  const Dataset d = load_dataset(a.data);
  const auto ids = select_ids(d, a.split, a.limit);
  const fs::path out = a.out.empty() ? fs::path(a.data) / "eval" : fs::path(a.out);

  std::vector<PredictionFile> runs;
  for (const auto& path : a.predictions) {
    auto f = read_predictions(path);
    if (f.method.empty()) f.method = fs::path(path).stem().string();
    runs.push_back(std::move(f));
  }
  json fallbacks = json::object();
  if (!a.baselines.empty()) {
    const Graph g = load_graph_for(a.graph_path, a.data);
    for (const auto& name : a.baselines) {
      if (name != "rumor" && name != "distance") throw ConfigError("baseline", "unknown baseline '" + name + "'");
      PredictionFile f;
      f.method = name;
      std::size_t fallback = 0;
      for (auto id : ids) {
        const auto infected = infected_nodes(d.samples[id].states);
        Prediction p;
        p.sample_id = id;
        p.runtime_ms = timed_ms(a.common.no_timing, [&] {
          if (name == "rumor") {
            // Rumor centrality is only defined when the infected subgraph is a tree.
            try {
              p.scores = rumor_centrality(g, infected);
              return;
            } catch (const std::invalid_argument&) {
              ++fallback;
            }
          }
          p.scores = distance_centrality(g, infected);
        });
        f.predictions[id] = std::move(p);
      }
      if (name == "rumor") fallbacks["rumor"] = fallback;
      runs.push_back(std::move(f));
    }
  }

  json summary = {{"config_hash", cfg.hash()}, {"seed", cfg.seed}, {"samples", ids.size()}, {"methods", json::array()}};
  for (const auto& run : runs) {
    const MetricsReport r = evaluate(d.samples, ids, run.predictions, cfg.bucket_width, run.method);
    write_text(out / (run.method + ".csv"), header_comment(cfg) + r.csv());
    summary["methods"].push_back({{"method", run.method},
                                  {"top1", r.overall.top1},
                                  {"top5", r.overall.top5},
                                  {"top10", r.overall.top10},
                                  {"top20", r.overall.top20},
                                  {"R_t", r.overall.normalized_rank},
                                  {"runtime_ms", r.runtime_ms}});
    std::cout << run.method << ": top1=" << r.overall.top1 << " R_t=" << r.overall.normalized_rank << "\n";
  }
  if (!fallbacks.empty()) summary["distance_fallbacks"] = fallbacks;
  write_text(out / "summary.json", summary.dump(2) + "\n");
  return 0;
}

struct BenchArgs {
  Common common;
  std::string checkpoint, out = "bench";
};

int run_bench(BenchArgs& a) {
  ExperimentConfig cfg = base_config(a.common);
  finish_config(cfg);
  const Graph g = build_graph(cfg.graph, cfg.seed);
  const EpidemicParams params = resolve_params(cfg.epidemic, g);
  if (params.model != EpidemicModel::SIR) throw UnsupportedModel("bench: DMP supports SIR only");
  const std::size_t n = cfg.bench_samples > 0 ? cfg.bench_samples : 100;
  const Dataset d = generate_dataset(g, params, n, cfg.T, cfg.seed, "graph", cfg.threads);
  std::vector<std::size_t> ids(d.samples.size());
  for (std::size_t k = 0; k < ids.size(); ++k) ids[k] = k;

  GnnModel model;
  if (!a.checkpoint.empty()) {
    model = load_checkpoint(a.checkpoint);
  } else {
    GnnHyper hp;
    hp.inputs = input_channels(params.model);
    hp.hidden = cfg.train.hidden;
    hp.layers = cfg.train.layers;
    hp.rule = cfg.train.rule;
    model = GnnModel::init(hp, cfg.seed);
  }
  std::vector<SourceScores> gnn_scores;
  const double gnn_ms = timed_ms(a.common.no_timing, [&] { gnn_scores = infer_many(model, g, d.samples, ids, 32, cfg.threads); });
  DmpOptions opts;
  opts.prune_candidates = false;
  opts.threads = cfg.threads;
  std::map<std::size_t, Prediction> dmp_preds, gnn_preds;
  const double dmp_ms = timed_ms(a.common.no_timing, [&] {
    for (auto id : ids) dmp_preds[id] = {id, dmp_infer(g, params, d.samples[id].states, d.samples[id].t, opts), 0.0};
  });
  for (auto id : ids) gnn_preds[id] = {id, gnn_scores[id], 0.0};
  const auto dmp_report = evaluate(d.samples, ids, dmp_preds, cfg.bucket_width, "dmp");
  const auto gnn_report = evaluate(d.samples, ids, gnn_preds, cfg.bucket_width, "gnn");

  const double ratio = gnn_ms > 0.0 ? dmp_ms / gnn_ms : 0.0;
  json summary = {{"config_hash", cfg.hash()},
                  {"seed", cfg.seed},
                  {"nodes", g.num_nodes()},
                  {"edges", g.num_edges()},
                  {"T", cfg.T},
                  {"samples", ids.size()},
                  {"gnn", {{"runtime_ms", gnn_ms}, {"top1", gnn_report.overall.top1}, {"trained", !a.checkpoint.empty()}}},
                  {"dmp", {{"runtime_ms", dmp_ms}, {"top1", dmp_report.overall.top1}, {"candidates", "all"}}},
                  {"speedup", ratio}};
  std::ostringstream table;
  table << header_comment(cfg) << "method,samples,total_ms,per_sample_ms,top1\n";
  const double per = static_cast<double>(ids.size());
  table << "dmp," << ids.size() << ',' << dmp_ms << ',' << dmp_ms / per << ',' << dmp_report.overall.top1 << '\n';
  table << "gnn," << ids.size() << ',' << gnn_ms << ',' << gnn_ms / per << ',' << gnn_report.overall.top1 << '\n';
  write_text(fs::path(a.out) / "bench.json", summary.dump(2) + "\n");
  write_text(fs::path(a.out) / "bench.csv", table.str());
  std::cout << table.str() << "speedup " << ratio << "x\n";
  return 0;
}

void add_graph_flags(CLI::App* app, GraphArgs& a) {
  a.gen_opt = app->add_option("--generator", a.generator, "er | ba | rgg | edgelist");
  a.n_opt = app->add_option("--n", a.n, "number of nodes");
  a.p_opt = app->add_option("--p", a.p, "ER edge probability or 'auto' (2 ln n / n)");
  a.m_opt = app->add_option("--m", a.m, "BA edges per new node");
  a.radius_opt = app->add_option("--radius", a.radius, "RGG radius");
  a.target_opt = app->add_option("--target-edges", a.target_edges, "RGG: tune the radius to about this many edges");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Patient-zero inference on contact networks"};
  app.require_subcommand(0, 1);
  bool version = false;
  app.add_flag("--version", version, "print tool, config schema and checkpoint format versions");

  GraphArgs gen;
  auto* gen_cmd = app.add_subcommand("generate-graph", "build a graph and write it as JSON");
  add_common(gen_cmd, gen.common);
  add_graph_flags(gen_cmd, gen);
  gen_cmd->add_option("-o,--out", gen.out, "output graph JSON");
  gen_cmd->add_option("--edge-list", gen.edge_list_out, "also write a whitespace edge list");

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "simulate epidemics and write a snapshot dataset");
  add_common(sim_cmd, sim.graph.common);
  add_graph_flags(sim_cmd, sim.graph);
  sim_cmd->add_option("--graph", sim.graph_path, "use this graph JSON instead of generating one")->check(CLI::ExistingFile);
  sim_cmd->add_option("-o,--out", sim.out, "dataset directory");
  sim_cmd->add_option("--preset", sim.preset, "parameter preset (covid)");
  sim.model_opt = sim_cmd->add_option("--model", sim.model, "sir | seir | covid");
  sim.r0_opt = sim_cmd->add_option("--r0", sim.r0, "basic reproduction number (beta = r0 gamma / lambda_1)");
  sim.beta_opt = sim_cmd->add_option("--beta", sim.beta, "per-contact infection probability");
  sim.gamma_opt = sim_cmd->add_option("--gamma", sim.gamma, "recovery probability");
  sim.alpha_opt = sim_cmd->add_option("--alpha", sim.alpha, "E -> I probability");
  sim.n_opt = sim_cmd->add_option("--n-samples", sim.n_samples, "number of snapshots");
  sim.T_opt = sim_cmd->add_option("--T", sim.T, "maximum observation time");

  BoundsArgs bounds;
  auto* bounds_cmd = app.add_subcommand("bounds", "theoretical top-1 accuracy limit curves as CSV");
  add_common(bounds_cmd, bounds.common);
  bounds_cmd->add_option("--n", bounds.n, "number of nodes")->check(CLI::Range(2, std::numeric_limits<int>::max()));
  bounds_cmd->add_option("--p", bounds.p, "edge probability or 'auto' (2 ln n / n)");
  bounds_cmd->add_option("--gamma", bounds.gamma, "recovery probability");
  bounds_cmd->add_option("--r0", bounds.r0, "comma-separated R0 values")->delimiter(',');
  bounds_cmd->add_option("--t-end", bounds.t_end, "last time point");
  bounds_cmd->add_option("--t-step", bounds.t_step, "time step");
  bounds_cmd->add_option("-o,--out", bounds.out, "CSV path (default stdout)");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train the graph convolutional network");
  add_common(train_cmd, tr.common);
  train_cmd->add_option("--data", tr.data, "dataset directory")->check(CLI::ExistingDirectory);
  train_cmd->add_option("--graph", tr.graph_path, "graph JSON (default <data>/graph.json)");
  train_cmd->add_option("-o,--out", tr.out, "output directory for model.ckpt and train_log.csv");
  tr.epochs_opt = train_cmd->add_option("--epochs", tr.epochs);
  tr.hidden_opt = train_cmd->add_option("--hidden", tr.hidden);
  tr.layers_opt = train_cmd->add_option("--layers", tr.layers);
  tr.batch_opt = train_cmd->add_option("--batch-size", tr.batch_size);
  tr.rule_opt = train_cmd->add_option("--rule", tr.rule, "symmetric | random_walk | mixture");

  InferArgs dmp_args;
  auto* dmp_cmd = app.add_subcommand("infer-dmp", "score candidate sources with dynamic message passing");
  add_common(dmp_cmd, dmp_args.common);
  dmp_cmd->add_option("--data", dmp_args.data, "dataset directory")->check(CLI::ExistingDirectory);
  dmp_cmd->add_option("--graph", dmp_args.graph_path, "graph JSON (default <data>/graph.json)");
  dmp_cmd->add_option("-o,--out", dmp_args.out, "predictions JSONL");
  dmp_cmd->add_option("--split", dmp_args.split, "test | val | train | all");
  dmp_cmd->add_option("--limit", dmp_args.limit, "only the first N samples of the split");
  dmp_cmd->add_flag("--scan", dmp_args.scan, "treat t as unknown and maximize over t <= T");
  dmp_cmd->add_flag("--all-candidates", dmp_args.full, "do not prune susceptible candidates");

  InferArgs gnn_args;
  auto* gnn_cmd = app.add_subcommand("infer-gnn", "score candidate sources with a trained checkpoint");
  add_common(gnn_cmd, gnn_args.common);
  gnn_cmd->add_option("--data", gnn_args.data, "dataset directory")->check(CLI::ExistingDirectory);
  gnn_cmd->add_option("--graph", gnn_args.graph_path, "graph JSON (default <data>/graph.json)");
  gnn_cmd->add_option("--checkpoint", gnn_args.checkpoint, "model.ckpt")->required()->check(CLI::ExistingFile);
  gnn_cmd->add_option("-o,--out", gnn_args.out, "predictions JSONL");
  gnn_cmd->add_option("--split", gnn_args.split, "test | val | train | all");
  gnn_cmd->add_option("--limit", gnn_args.limit, "only the first N samples of the split");
  gnn_cmd->add_option("--chunk", gnn_args.chunk, "snapshots per forward pass")->check(CLI::PositiveNumber);

  EvaluateArgs ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "per-time-bucket metrics for predictions and baselines");
  add_common(eval_cmd, ev.common);
  eval_cmd->add_option("--data", ev.data, "dataset directory")->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--graph", ev.graph_path, "graph JSON (default <data>/graph.json)");
  eval_cmd->add_option("--predictions", ev.predictions, "predictions JSONL (repeatable)")->check(CLI::ExistingFile);
  eval_cmd->add_option("--baseline", ev.baselines, "rumor | distance (repeatable)");
  eval_cmd->add_option("--split", ev.split, "test | val | train | all");
  eval_cmd->add_option("--limit", ev.limit, "only the first N samples of the split");
  eval_cmd->add_option("-o,--out", ev.out, "report directory (default <data>/eval)");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "wall-clock comparison of GNN and full-candidate DMP inference");
  add_common(bench_cmd, bench.common);
  bench_cmd->add_option("--checkpoint", bench.checkpoint, "trained model (default: untrained, same shape)")
      ->check(CLI::ExistingFile);
  bench_cmd->add_option("-o,--out", bench.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  if (version) {
    std::cout << "pzero " << kToolVersion << "\nconfig schema " << kConfigSchemaVersion << "\ncheckpoint format "
              << kCheckpointVersion << "\ndataset format " << kDatasetFormatVersion << "\n";
    return 0;
  }
  try {
    if (gen_cmd->parsed()) return run_generate_graph(gen);
    if (sim_cmd->parsed()) return run_simulate(sim);
    if (bounds_cmd->parsed()) return run_bounds(bounds);
    if (train_cmd->parsed()) return run_train(tr);
    if (dmp_cmd->parsed()) return run_infer_dmp(dmp_args);
    if (gnn_cmd->parsed()) return run_infer_gnn(gnn_args);
    if (eval_cmd->parsed()) return run_evaluate(ev);
    if (bench_cmd->parsed()) return run_bench(bench);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  std::cerr << app.help();
  return kExitUsage;
}
