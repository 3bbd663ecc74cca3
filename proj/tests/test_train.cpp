#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "blocklink/train.hpp"
#include "doctest.h"

using namespace blocklink;

namespace {

// Two 8-node blocks bridged by one edge: enough structure for a few epochs
// of smoke training.
Graph two_block_graph() {
  EdgeList edges;
  for (int u = 0; u < 8; ++u)
    for (int v = u + 1; v < 8; ++v)
      if ((u + v) % 2 == 0 || v == u + 1) edges.push_back({u, v});
  for (int u = 8; u < 16; ++u)
    for (int v = u + 1; v < 16; ++v)
      if ((u + v) % 2 == 0 || v == u + 1) edges.push_back({u, v});
  edges.push_back({3, 12});
  return make_graph(16, edges);
}

TrainConfig smoke_cfg(const Graph& g) {
  TrainConfig cfg;
  cfg.model.num_nodes = g.num_nodes;
  cfg.model.layers = 1;
  cfg.model.heads = 2;
  cfg.model.hidden = 8;
  cfg.model.K = 3;
  cfg.model.d_exp = 2;
  cfg.model.prior_a = 2.0;
  cfg.model.prior_b = 1.0;
  cfg.epochs = 3;
  cfg.anneal_end = 2;
  cfg.val_negatives = 10;
  cfg.seed = 0;
  return cfg;
}

}  // namespace

TEST_CASE("training runs its epochs and logs the objective parts") {
  Graph g = two_block_graph();
  SeededRng split_rng = SeededRng(0).substream(Stream::split);
  EdgeSplit split = split_edges(g, 0.8, 0.1, 0.1, split_rng);
  TrainConfig cfg = smoke_cfg(g);

  TrainResult res = train(g, split, nullptr, cfg);
  REQUIRE(res.history.size() == 3);
  for (int e = 0; e < 3; ++e) {
    CHECK(res.history[static_cast<std::size_t>(e)].epoch == e);
    CHECK(std::isfinite(res.history[static_cast<std::size_t>(e)].mean.total));
    CHECK(std::isfinite(res.history[static_cast<std::size_t>(e)].val_mrr));
  }
  // annealing ramps from zero over anneal_end epochs
  CHECK(res.history[0].mean.anneal_weight == 0.0);
  CHECK(res.history[1].mean.anneal_weight == doctest::Approx(0.5));
  CHECK(res.history[2].mean.anneal_weight == 1.0);
  // validation selected some epoch
  CHECK(res.best_epoch >= 0);
  CHECK(res.best_epoch < 3);
  CHECK(res.best_val_mrr > 0.0);
  CHECK(res.best_val_mrr <= 1.0);
}

TEST_CASE("anneal_end zero pins the weight at one from the start") {
  Graph g = two_block_graph();
  SeededRng split_rng = SeededRng(1).substream(Stream::split);
  EdgeSplit split = split_edges(g, 0.9, 0.0, 0.1, split_rng);
  TrainConfig cfg = smoke_cfg(g);
  cfg.epochs = 2;
  cfg.anneal_end = 0;
  TrainResult res = train(g, split, nullptr, cfg);
  CHECK(res.history[0].mean.anneal_weight == 1.0);
  CHECK(res.history[1].mean.anneal_weight == 1.0);
  // no validation split: selection never happens and val column is NaN
  CHECK(res.best_epoch == -1);
  CHECK(std::isnan(res.history[0].val_mrr));
}

TEST_CASE("identical configurations train to identical histories") {
  Graph g = two_block_graph();
  SeededRng s1 = SeededRng(2).substream(Stream::split);
  EdgeSplit split = split_edges(g, 0.8, 0.1, 0.1, s1);
  TrainConfig cfg = smoke_cfg(g);
  cfg.seed = 7;
  TrainResult a = train(g, split, nullptr, cfg);
  TrainResult b = train(g, split, nullptr, cfg);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].mean.total == b.history[i].mean.total);
    CHECK(a.history[i].mean.recon == b.history[i].mean.recon);
    CHECK(a.history[i].val_mrr == b.history[i].val_mrr);
  }
  // parameters agree bitwise after restoring the best epoch
  for (const std::string& name : a.model.params.names()) {
    const Tensor& ta = a.model.params.at(name);
    const Tensor& tb = b.model.params.at(name);
    for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta.data()[i] == tb.data()[i]);
  }
}

TEST_CASE("a diverging run aborts with a numeric error") {
  Graph g = two_block_graph();
  SeededRng split_rng = SeededRng(3).substream(Stream::split);
  EdgeSplit split = split_edges(g, 0.9, 0.0, 0.1, split_rng);
  TrainConfig cfg = smoke_cfg(g);
  // one optimizer step at this rate pushes the strength log-std head far
  // enough that exp() overflows on the next forward pass
  cfg.lr = 200.0;
  cfg.epochs = 50;
  cfg.anneal_end = 0;
  CHECK_THROWS_AS(train(g, split, nullptr, cfg), NumericError);
  try {
    train(g, split, nullptr, cfg);
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("mini-batching walks the positive set and still trains") {
  Graph g = two_block_graph();
  SeededRng split_rng = SeededRng(4).substream(Stream::split);
  EdgeSplit split = split_edges(g, 0.8, 0.1, 0.1, split_rng);
  TrainConfig cfg = smoke_cfg(g);
  cfg.batch_size = 8;
  TrainResult res = train(g, split, nullptr, cfg);
  CHECK(res.history.size() == 3);
  for (const EpochRow& row : res.history) CHECK(std::isfinite(row.mean.total));
}

TEST_CASE("evaluate_ranked equals manual scoring plus ranking metrics") {
  Graph g = two_block_graph();
  SeededRng split_rng = SeededRng(5).substream(Stream::split);
  EdgeSplit split = split_edges(g, 0.8, 0.1, 0.1, split_rng);
  TrainConfig cfg = smoke_cfg(g);
  TrainResult res = train(g, split, nullptr, cfg);

  AdjacencyIndex observed(g);
  SeededRng ev_rng = SeededRng(5).substream(Stream::evaluation);
  RankedEval ev = uniform_negatives(observed, split.test, 12, ev_rng);

  Metrics got = evaluate_ranked(res.model, nullptr, res.topo, ev, {10, 20});

  // manual pass: deterministic scores, one list at a time
  std::vector<int> us, vs;
  for (const Edge& e : ev.positives) {
    us.push_back(e.first);
    vs.push_back(e.second);
  }
  std::vector<double> pos_scores = res.model.score_pairs(nullptr, res.topo, us, vs);
  std::vector<std::vector<double>> neg_scores;
  for (const EdgeList& cand : ev.negatives) {
    std::vector<int> cu, cv;
    for (const Edge& e : cand) {
      cu.push_back(e.first);
      cv.push_back(e.second);
    }
    neg_scores.push_back(res.model.score_pairs(nullptr, res.topo, cu, cv));
  }
  Metrics want = ranking_metrics(pos_scores, neg_scores, {10, 20});
  CHECK(got.auc == want.auc);
  CHECK(got.mrr == want.mrr);
  CHECK(got.ranks == want.ranks);
  CHECK(got.hits == want.hits);
}

TEST_CASE("history csv has the documented header and one row per epoch") {
  Graph g = two_block_graph();
  SeededRng split_rng = SeededRng(6).substream(Stream::split);
  EdgeSplit split = split_edges(g, 0.8, 0.1, 0.1, split_rng);
  TrainConfig cfg = smoke_cfg(g);
  TrainResult res = train(g, split, nullptr, cfg);

  std::string path = "/tmp/blocklink_history_test.csv";
  write_history_csv(path, res.topo, res.history);
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("#", 0) == 0);  // topology comment first
  std::getline(in, line);
  CHECK(line == "epoch,total,recon,kl_sticks,kl_memberships,kl_strengths,feat_recon,anneal_weight");
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 3);
  std::remove(path.c_str());
}

TEST_CASE("ablated divergence terms log exactly zero") {
  Graph g = two_block_graph();
  SeededRng split_rng = SeededRng(7).substream(Stream::split);
  EdgeSplit split = split_edges(g, 0.8, 0.1, 0.1, split_rng);
  TrainConfig cfg = smoke_cfg(g);
  cfg.model.no_kl_strengths = true;
  TrainResult res = train(g, split, nullptr, cfg);
  for (const EpochRow& row : res.history) {
    CHECK(row.mean.kl_strengths == 0.0);
    CHECK(row.mean.kl_sticks != 0.0);
  }
}
