#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "blocklink/config.hpp"
#include "blocklink/decoder.hpp"
#include "blocklink/errors.hpp"
#include "blocklink/fixture.hpp"
#include "blocklink/graph.hpp"
#include "blocklink/metrics.hpp"
#include "blocklink/model.hpp"
#include "blocklink/optim.hpp"
#include "blocklink/rng.hpp"
#include "blocklink/synthetic.hpp"
#include "blocklink/topology.hpp"
#include "blocklink/train.hpp"

namespace {

using namespace blocklink;

std::string join_path(const std::string& dir, const std::string& name) { return dir + "/" + name; }

void ensure_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out, ec);
  if (ec) throw IoError("cannot create output directory '" + cfg.out + "': " + ec.message());
}

struct DataBundle {
  Graph graph;
  EdgeSplit split;
  Tensor features;  // undefined when no feature file was given

  const Tensor* feat() const { return features.defined() ? &features : nullptr; }
};

DataBundle load_dataset(const RunConfig& cfg, const std::string& command) {
  if (cfg.edges.empty()) throw ConfigError("config key 'edges': required for " + command);
  LoadedEdgeList led = load_edge_list(cfg.edges);
  if (led.self_loops_dropped > 0)
    std::cerr << "warning: dropped " << led.self_loops_dropped << " self loops from '" << cfg.edges << "'\n";
  DataBundle b;
  b.graph = std::move(led.graph);
  if (!cfg.features.empty()) b.features = load_feature_csv(cfg.features, b.graph.num_nodes);
  SeededRng split_rng = SeededRng(cfg.seed).substream(Stream::split);
  b.split = split_edges(b.graph, cfg.r_train, cfg.r_valid, cfg.r_test, split_rng);
  return b;
}

Checkpoint load_required_checkpoint(const RunConfig& cfg, const std::string& command) {
  if (cfg.checkpoint.empty()) throw ConfigError("config key 'checkpoint': required for " + command);
  return load_checkpoint(cfg.checkpoint);
}

// Features for a checkpoint-backed command; width must match what the model
// was trained with.
Tensor checkpoint_features(const RunConfig& cfg, const Checkpoint& ck) {
  if (ck.cfg.feat_dim == 0) return Tensor();
  if (cfg.features.empty())
    throw ConfigError("config key 'features': checkpoint expects " + std::to_string(ck.cfg.feat_dim) +
                      " feature columns");
  Tensor feats = load_feature_csv(cfg.features, ck.cfg.num_nodes);
  if (feats.cols() != ck.cfg.feat_dim)
    throw ConfigError("features: file has " + std::to_string(feats.cols()) + " columns, checkpoint expects " +
                      std::to_string(ck.cfg.feat_dim));
  return feats;
}

// Test-phase candidate stream; distinct from the in-loop validation stream so
// replaying evaluation never re-reads training draws.
SeededRng test_eval_rng(const RunConfig& cfg) {
  return SeededRng(cfg.seed).substream(Stream::evaluation).substream(1);
}

RankedEval protocol_negatives(const RunConfig& cfg, const AdjacencyIndex& observed, const EdgeList& positives,
                              SeededRng& rng) {
  if (cfg.protocol == "heart-approx") return heart_negatives(observed, positives, cfg.eval_negatives, rng);
  return uniform_negatives(observed, positives, cfg.eval_negatives, rng);
}

const std::vector<int> kHitsKs = {10, 20, 50, 100};

void write_metrics_json(const std::string& path, const Metrics& m, int n_neg_per_pos,
                        const std::string& protocol) {
  nlohmann::json j;
  j["auc"] = m.auc;
  j["mrr"] = m.mrr;
  for (int k : kHitsKs) j["hits@" + std::to_string(k)] = m.hits.at(k);
  j["n_pos"] = m.ranks.size();
  j["n_neg_per_pos"] = n_neg_per_pos;
  j["protocol"] = protocol;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

void print_metrics(const Metrics& m) {
  std::printf("auc = %.6f\n", m.auc);
  std::printf("mrr = %.6f\n", m.mrr);
  for (int k : kHitsKs) std::printf("hits@%d = %.6f\n", k, m.hits.at(k));
}

void run_generate(const RunConfig& cfg) {
  SeededRng gen_rng = SeededRng(cfg.seed).substream(Stream::generate);
  SyntheticInstance inst = generate_synthetic(cfg.n, cfg.k, gen_rng, cfg.synthetic_mode(), cfg.bias,
                                              cfg.synthetic_sampling(), cfg.hidden_fraction);
  save_edge_list(inst.graph, join_path(cfg.out, "edges.txt"));
  save_edge_list(Graph{inst.graph.num_nodes, inst.hidden}, join_path(cfg.out, "hidden.txt"));
  save_matrix_csv(inst.b_true, join_path(cfg.out, "b_true.csv"));
  std::printf("nodes = %d\n", inst.graph.num_nodes);
  std::printf("edges = %zu\n", inst.graph.edges.size());
  std::printf("hidden_pairs = %zu\n", inst.hidden.size());
}

void run_split(const RunConfig& cfg) {
  DataBundle b = load_dataset(cfg, "split");
  save_edge_list(Graph{b.graph.num_nodes, b.split.train}, join_path(cfg.out, "train.txt"));
  save_edge_list(Graph{b.graph.num_nodes, b.split.valid}, join_path(cfg.out, "valid.txt"));
  save_edge_list(Graph{b.graph.num_nodes, b.split.test}, join_path(cfg.out, "test.txt"));
  std::printf("train = %zu\n", b.split.train.size());
  std::printf("valid = %zu\n", b.split.valid.size());
  std::printf("test = %zu\n", b.split.test.size());
}

void run_train(const RunConfig& cfg) {
  DataBundle b = load_dataset(cfg, "train");
  const int feat_dim = b.features.defined() ? b.features.cols() : 0;
  TrainConfig tc = cfg.train_config(b.graph.num_nodes, feat_dim);
  TrainResult res = train(b.graph, b.split, b.feat(), tc);

  write_history_csv(join_path(cfg.out, "history.csv"), res.topo, res.history);
  save_checkpoint(join_path(cfg.out, "checkpoint.txt"), res.model, res.topo);
  std::printf("epochs = %zu\n", res.history.size());
  std::printf("best_epoch = %d\n", res.best_epoch);
  std::printf("best_val_mrr = %.6f\n", res.best_val_mrr);

  if (b.split.test.empty()) {
    std::cerr << "warning: empty test split, skipping metrics.json\n";
    return;
  }
  AdjacencyIndex observed(b.graph);
  SeededRng eval_rng = test_eval_rng(cfg);
  RankedEval re = protocol_negatives(cfg, observed, b.split.test, eval_rng);
  Metrics m = evaluate_ranked(res.model, b.feat(), res.topo, re, kHitsKs);
  write_metrics_json(join_path(cfg.out, "metrics.json"), m, cfg.eval_negatives, cfg.protocol);
  print_metrics(m);
}

void run_eval(const RunConfig& cfg) {
  Checkpoint ck = load_required_checkpoint(cfg, "eval");
  Tensor feats = checkpoint_features(cfg, ck);
  const Tensor* fp = feats.defined() ? &feats : nullptr;

  DataBundle b = load_dataset(cfg, "eval");
  if (b.graph.num_nodes != ck.cfg.num_nodes)
    throw ConfigError("eval: edge list has " + std::to_string(b.graph.num_nodes) + " nodes, checkpoint has " +
                      std::to_string(ck.cfg.num_nodes));
  if (b.split.test.empty()) throw ConfigError("eval: empty test split (r_test rounds to zero pairs)");

  AdjacencyIndex observed(b.graph);
  SeededRng eval_rng = test_eval_rng(cfg);
  RankedEval re = protocol_negatives(cfg, observed, b.split.test, eval_rng);
  Metrics m = evaluate_ranked(ck.model, fp, ck.topo, re, kHitsKs);
  write_metrics_json(join_path(cfg.out, "metrics.json"), m, cfg.eval_negatives, cfg.protocol);
  print_metrics(m);
}

void run_heuristic(const RunConfig& cfg) {
  DataBundle b = load_dataset(cfg, "heuristic");
  if (b.split.test.empty()) throw ConfigError("heuristic: empty test split (r_test rounds to zero pairs)");

  // Scores come from the train+valid graph so test edges never feed their own
  // predictor; candidate exclusion still uses everything observed.
  EdgeList known = b.split.train;
  known.insert(known.end(), b.split.valid.begin(), b.split.valid.end());
  AdjacencyIndex score_index(b.graph.num_nodes, known);
  AdjacencyIndex observed(b.graph);

  SeededRng eval_rng = test_eval_rng(cfg);
  RankedEval re = protocol_negatives(cfg, observed, b.split.test, eval_rng);
  Heuristic kind = heuristic_from_name(cfg.heuristic);

  std::vector<double> pos;
  pos.reserve(re.positives.size());
  for (const auto& e : re.positives) pos.push_back(heuristic_score(kind, score_index, e.first, e.second));
  std::vector<std::vector<double>> negs(re.negatives.size());
  for (std::size_t i = 0; i < re.negatives.size(); ++i) {
    negs[i].reserve(re.negatives[i].size());
    for (const auto& e : re.negatives[i]) negs[i].push_back(heuristic_score(kind, score_index, e.first, e.second));
  }
  Metrics m = ranking_metrics(pos, negs, kHitsKs);
  write_metrics_json(join_path(cfg.out, "metrics.json"), m, cfg.eval_negatives, cfg.protocol);
  std::printf("heuristic = %s\n", cfg.heuristic.c_str());
  print_metrics(m);
}

void run_grad_check(const RunConfig& cfg) {
  GradCheckFixture fx = make_gradcheck_fixture(cfg.seed);
  auto loss_fn = [&fx](ParamStore&) { return fx.loss(); };
  double err = finite_difference_check(loss_fn, fx.model.params, cfg.fd_step);
  bool ok = err < cfg.fd_tolerance;
  std::printf("grad-check: max_rel_err = %.6e tolerance = %.6e %s\n", err, cfg.fd_tolerance,
              ok ? "PASS" : "FAIL");
  if (!ok) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "grad-check: max relative error %.6e exceeds %.6e", err, cfg.fd_tolerance);
    throw NumericError(buf);
  }
}

void run_diag_expander(const RunConfig& cfg) {
  SeededRng edge_rng = SeededRng(cfg.seed).substream(Stream::topology);
  EdgeList ex = build_expander(cfg.n, cfg.d_exp, edge_rng);

  std::vector<int> hist = degree_histogram(cfg.n, ex);
  int max_degree = 0;
  for (std::size_t d = 0; d < hist.size(); ++d)
    if (hist[d] > 0) max_degree = static_cast<int>(d);
  std::optional<int> diam = bfs_diameter(cfg.n, ex);

  // Same stream, so this topology holds exactly the edges reported above.
  SeededRng topo_rng = SeededRng(cfg.seed).substream(Stream::topology);
  TopologyConfig tcfg;
  tcfg.use_local = false;
  tcfg.use_expander = true;
  tcfg.self_loops = cfg.self_loops;
  tcfg.d_exp = cfg.d_exp;
  AttentionTopology topo = build_topology({}, cfg.n, tcfg, &topo_rng);
  long long ops = count_attention_ops(topo, cfg.heads, cfg.hidden / cfg.heads);

  std::string report;
  report += "nodes = " + std::to_string(cfg.n) + "\n";
  report += "d_exp = " + std::to_string(cfg.d_exp) + "\n";
  report += "seed = " + std::to_string(cfg.seed) + "\n";
  report += "undirected_expander_edges = " + std::to_string(ex.size()) + "\n";
  report += "max_degree = " + std::to_string(max_degree) + "\n";
  report += "connected = " + std::string(diam.has_value() ? "1" : "0") + "\n";
  report += "diameter = " + (diam.has_value() ? std::to_string(*diam) : std::string("inf")) + "\n";
  report += "directed_attention_edges = " + std::to_string(topo.num_edges()) + "\n";
  report += "score_ops_per_layer = " + std::to_string(ops) + "\n";

  std::ofstream out(join_path(cfg.out, "expander_report.txt"));
  if (!out) throw IoError("cannot write '" + join_path(cfg.out, "expander_report.txt") + "'");
  out << report;
  std::fputs(report.c_str(), stdout);
}

void run_reconstruct(const RunConfig& cfg) {
  Checkpoint ck = load_required_checkpoint(cfg, "reconstruct");
  Tensor feats = checkpoint_features(cfg, ck);
  const Tensor* fp = feats.defined() ? &feats : nullptr;

  int dims = cfg.dims < 0 ? ck.cfg.K : cfg.dims;
  if (dims > ck.cfg.K)
    throw ConfigError("config key 'dims': " + std::to_string(dims) + " exceeds checkpoint K = " +
                      std::to_string(ck.cfg.K));
  Tensor p = truncated_reconstruction(ck.model, fp, ck.topo, dims);
  save_matrix_csv(p, join_path(cfg.out, "reconstruction.csv"));
  std::printf("dims = %d\n", dims);
  std::printf("matrix = %d x %d\n", p.rows(), p.cols());
}

void run_export_embeddings(const RunConfig& cfg) {
  Checkpoint ck = load_required_checkpoint(cfg, "export-embeddings");
  Tensor feats = checkpoint_features(cfg, ck);
  const Tensor* fp = feats.defined() ? &feats : nullptr;

  NoGradGuard guard;
  Tensor h = ck.model.encode(fp, ck.topo, /*training=*/false, nullptr);
  LatentSample s = ck.model.expected(h);
  save_matrix_csv(s.z, join_path(cfg.out, "z.csv"));
  save_matrix_csv(s.b, join_path(cfg.out, "b.csv"));
  save_matrix_csv(s.mu, join_path(cfg.out, "mu.csv"));
  save_matrix_csv(Tensor::from({1, ck.cfg.K}, s.pi.vec()), join_path(cfg.out, "pi.csv"));
  std::printf("nodes = %d\n", s.z.rows());
  std::printf("communities = %d\n", s.z.cols());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"overlapping block-model link prediction toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool deterministic = false;

  app.add_option("--config", config_path, "configuration file (key = value lines, '#' comments)");
  app.add_option("--set", sets, "configuration override key=value (repeatable)")
      ->allow_extra_args(false);
  CLI::Option* out_opt = app.add_option("--out", out_dir, "output directory");
  CLI::Option* seed_opt = app.add_option("--seed", seed, "root random seed");
  CLI::Option* det_opt = app.add_flag("--deterministic", deterministic, "record the determinism contract");

  struct Command {
    const char* name;
    const char* desc;
    void (*fn)(const RunConfig&);
    CLI::App* sub = nullptr;
  };
  std::vector<Command> commands = {
      {"generate", "sample a planted-community graph and hold out pairs", &run_generate},
      {"split", "partition an edge list into train/valid/test", &run_split},
      {"train", "fit the model and evaluate the test split", &run_train},
      {"eval", "score a checkpoint on the test split", &run_eval},
      {"heuristic", "rank test pairs with a neighborhood heuristic", &run_heuristic},
      {"grad-check", "finite-difference audit of the training gradient", &run_grad_check},
      {"diag-expander", "report connectivity of the expander overlay", &run_diag_expander},
      {"reconstruct", "decode the full pair-probability matrix", &run_reconstruct},
      {"export-embeddings", "write latent community CSVs", &run_export_embeddings},
  };
  for (auto& c : commands) {
    c.sub = app.add_subcommand(c.name, c.desc);
    c.sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    std::vector<std::string> overrides = sets;
    if (out_opt->count() > 0) overrides.push_back("out=" + out_dir);
    if (seed_opt->count() > 0) overrides.push_back("seed=" + std::to_string(seed));
    if (det_opt->count() > 0) overrides.push_back("deterministic=1");
    RunConfig cfg = parse_config(config_path, overrides);

    const Command* chosen = nullptr;
    for (const auto& c : commands)
      if (c.sub->parsed()) chosen = &c;
    if (!chosen) throw ConfigError("no command given");

    ensure_out_dir(cfg);
    write_config_snapshot(join_path(cfg.out, "config.txt"), cfg, chosen->name);
    chosen->fn(cfg);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const SamplingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
