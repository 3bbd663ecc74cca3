#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "blocklink/model.hpp"
#include "blocklink/rng.hpp"
#include "doctest.h"

using namespace blocklink;

namespace {

ModelConfig small_cfg() {
  ModelConfig cfg;
  cfg.num_nodes = 8;
  cfg.feat_dim = 0;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.hidden = 8;
  cfg.K = 3;
  cfg.d_exp = 2;
  cfg.prior_a = 2.0;
  cfg.prior_b = 1.0;
  return cfg;
}

AttentionTopology ring_topology(const ModelConfig& cfg, std::uint64_t seed) {
  EdgeList local;
  for (int i = 0; i < cfg.num_nodes; ++i) {
    int a = i, b = (i + 1) % cfg.num_nodes;
    local.push_back({std::min(a, b), std::max(a, b)});
  }
  std::sort(local.begin(), local.end());
  SeededRng rng = SeededRng(seed).substream(Stream::topology);
  return build_topology(local, cfg.num_nodes, cfg.topology(), &rng);
}

}  // namespace

TEST_CASE("config validation rejects inconsistent settings") {
  ModelConfig bad = small_cfg();
  bad.hidden = 7;  // not divisible by heads
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  ModelConfig bad2 = small_cfg();
  bad2.num_nodes = 0;
  CHECK_THROWS_AS(bad2.validate(), ConfigError);

  ModelConfig bad3 = small_cfg();
  bad3.K = 0;
  CHECK_THROWS_AS(bad3.validate(), ConfigError);

  ModelConfig bad4 = small_cfg();
  bad4.d_exp = 3;
  CHECK_THROWS_AS(bad4.validate(), ConfigError);

  ModelConfig bad5 = small_cfg();
  bad5.dropout = 1.5;
  CHECK_THROWS_AS(bad5.validate(), ConfigError);

  CHECK_NOTHROW(small_cfg().validate());
}

TEST_CASE("encoding rejects a topology that leaves nodes unattended") {
  // all edge classes disabled: nobody has an in-edge, so the per-node
  // softmax would be undefined; the encoder refuses to run
  ModelConfig cfg = small_cfg();
  cfg.no_local = true;
  cfg.no_expander = true;
  cfg.self_loops = false;
  SeededRng rng(7);
  Model m = Model::init(cfg, rng);
  AttentionTopology topo = build_topology({}, cfg.num_nodes, cfg.topology(), nullptr);
  CHECK_FALSE(topo.full_coverage);
  CHECK_THROWS_AS(m.encode(nullptr, topo, false, nullptr), ContractError);
}

TEST_CASE("sub-config projections carry the relevant fields") {
  ModelConfig cfg = small_cfg();
  cfg.dropout = 0.25;
  cfg.tau = 0.8;
  cfg.no_stick_prior = true;
  cfg.no_kl_strengths = true;

  EncoderConfig e = cfg.encoder();
  CHECK(e.num_nodes == 8);
  CHECK(e.heads == 2);
  CHECK(e.head_dim == 4);
  CHECK(e.dropout == 0.25);

  VariationalConfig v = cfg.variational();
  CHECK(v.K == 3);
  CHECK(v.tau == 0.8);
  CHECK(v.prior_a == 2.0);

  DecoderConfig d = cfg.decoder().resolved();
  CHECK(d.K == 3);
  CHECK(d.d_hidden == 6);
  CHECK(d.d_mlp == 3);
  CHECK(d.feat_dim == 0);

  ElboTerms t = cfg.elbo_terms();
  CHECK(t.sticks == false);  // no stick prior removes the stick divergence
  CHECK(t.strengths == false);
  CHECK(t.memberships == true);
}

TEST_CASE("init builds one parameter store spanning all components") {
  ModelConfig cfg = small_cfg();
  SeededRng rng(0);
  Model m = Model::init(cfg, rng);
  CHECK(m.params.contains("enc.embed"));
  CHECK(m.params.contains("enc.L0.wq"));
  CHECK(m.params.contains("var.w_pi"));
  CHECK(m.params.contains("var.log_c"));
  CHECK(m.params.contains("dec.w1"));
  CHECK_FALSE(m.params.contains("dec.feat_w"));  // no features configured

  ModelConfig feats = small_cfg();
  feats.feat_dim = 5;
  SeededRng rng2(0);
  Model mf = Model::init(feats, rng2);
  CHECK(mf.params.contains("enc.in_proj"));
  CHECK(mf.params.contains("dec.feat_w"));
  CHECK(mf.params.contains("dec.feat_b"));
}

TEST_CASE("score_pairs is deterministic bounded and symmetric") {
  ModelConfig cfg = small_cfg();
  SeededRng rng(1);
  Model m = Model::init(cfg, rng);
  AttentionTopology topo = ring_topology(cfg, 1);

  std::vector<int> us = {0, 2, 5};
  std::vector<int> vs = {1, 7, 6};
  std::vector<double> s1 = m.score_pairs(nullptr, topo, us, vs);
  std::vector<double> s2 = m.score_pairs(nullptr, topo, us, vs);
  REQUIRE(s1.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(s1[i] == s2[i]);
    CHECK(s1[i] > 0.0);
    CHECK(s1[i] < 1.0);
  }
  // swapping endpoints leaves the inner-product score unchanged
  std::vector<double> swapped = m.score_pairs(nullptr, topo, vs, us);
  for (std::size_t i = 0; i < 3; ++i) CHECK(swapped[i] == doctest::Approx(s1[i]).epsilon(1e-15));
}

TEST_CASE("sampled scoring differs across streams but replays within one") {
  ModelConfig cfg = small_cfg();
  SeededRng rng(2);
  Model m = Model::init(cfg, rng);
  AttentionTopology topo = ring_topology(cfg, 2);
  std::vector<int> us = {0, 3};
  std::vector<int> vs = {4, 6};

  SeededRng n1 = SeededRng(5).substream(Stream::sampling);
  SeededRng n2 = SeededRng(5).substream(Stream::sampling);
  std::vector<double> a = m.score_pairs_sampled(nullptr, topo, us, vs, n1);
  std::vector<double> b = m.score_pairs_sampled(nullptr, topo, us, vs, n2);
  CHECK(a == b);

  SeededRng n3 = SeededRng(6).substream(Stream::sampling);
  std::vector<double> c = m.score_pairs_sampled(nullptr, topo, us, vs, n3);
  CHECK(a != c);
}

TEST_CASE("full pipeline produces a finite differentiable objective") {
  ModelConfig cfg = small_cfg();
  SeededRng rng(3);
  Model m = Model::init(cfg, rng);
  AttentionTopology topo = ring_topology(cfg, 3);

  Tensor h = m.encode(nullptr, topo, true, nullptr);
  SeededRng noise = SeededRng(3).substream(Stream::sampling);
  LatentNoise ln = draw_latent_noise(cfg.num_nodes, cfg.K, noise);
  LatentSample s = m.sample(h, ln);
  ElboLoss loss = m.loss(s, {0, 1, 2}, {3, 4, 5}, {1.0, 0.0, 1.0}, nullptr, 0.5);
  CHECK(std::isfinite(loss.parts.total));
  GradientMap g = backward(loss.total, m.params);
  double gnorm = 0.0;
  for (const auto& [name, grad] : g)
    for (std::size_t i = 0; i < grad.size(); ++i) gnorm += grad.data()[i] * grad.data()[i];
  CHECK(gnorm > 0.0);
  CHECK(std::isfinite(gnorm));
}

TEST_CASE("checkpoints round trip parameters buffers and topology exactly") {
  ModelConfig cfg = small_cfg();
  cfg.dropout = 0.1;
  SeededRng rng(4);
  Model m = Model::init(cfg, rng);
  AttentionTopology topo = ring_topology(cfg, 4);

  // move normalization buffers off init so the round trip is nontrivial
  SeededRng drop = SeededRng(4).substream(Stream::noise);
  (void)m.encode(nullptr, topo, true, &drop);

  std::string path = "/tmp/blocklink_test_ckpt.txt";
  save_checkpoint(path, m, topo);
  Checkpoint ck = load_checkpoint(path);

  CHECK(ck.cfg.num_nodes == cfg.num_nodes);
  CHECK(ck.cfg.K == cfg.K);
  CHECK(ck.cfg.dropout == cfg.dropout);
  CHECK(ck.cfg.prior_a == cfg.prior_a);

  // parameters bitwise equal
  for (const std::string& name : m.params.names()) {
    REQUIRE(ck.model.params.contains(name));
    const Tensor& a = m.params.at(name);
    const Tensor& b = ck.model.params.at(name);
    REQUIRE(a.shape() == b.shape());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
  }
  // normalization buffers bitwise equal
  REQUIRE(ck.model.state.bn_mean.size() == m.state.bn_mean.size());
  for (std::size_t l = 0; l < m.state.bn_mean.size(); ++l) {
    CHECK(ck.model.state.bn_mean[l] == m.state.bn_mean[l]);
    CHECK(ck.model.state.bn_var[l] == m.state.bn_var[l]);
  }
  // topology identical
  CHECK(ck.topo.src == topo.src);
  CHECK(ck.topo.dst == topo.dst);
  CHECK(ck.topo.type == topo.type);
  CHECK(ck.topo.n_local == topo.n_local);
  CHECK(ck.topo.full_coverage == topo.full_coverage);

  // and the loaded model scores identically
  std::vector<int> us = {0, 1};
  std::vector<int> vs = {5, 4};
  std::vector<double> s1 = m.score_pairs(nullptr, topo, us, vs);
  std::vector<double> s2 = ck.model.score_pairs(nullptr, ck.topo, us, vs);
  CHECK(s1 == s2);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint loading rejects corrupted files") {
  ModelConfig cfg = small_cfg();
  SeededRng rng(5);
  Model m = Model::init(cfg, rng);
  AttentionTopology topo = ring_topology(cfg, 5);
  std::string path = "/tmp/blocklink_test_ckpt2.txt";
  save_checkpoint(path, m, topo);

  // bad magic line
  {
    std::ifstream in(path);
    std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out("/tmp/blocklink_bad1.txt");
    out << "garbage\n" << body;
  }
  CHECK_THROWS_AS(load_checkpoint("/tmp/blocklink_bad1.txt"), ParseError);

  // truncation mid-tensor
  {
    std::ifstream in(path);
    std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out("/tmp/blocklink_bad2.txt");
    out << body.substr(0, body.size() / 2);
  }
  CHECK_THROWS_AS(load_checkpoint("/tmp/blocklink_bad2.txt"), ParseError);

  CHECK_THROWS_AS(load_checkpoint("/tmp/blocklink_missing_ckpt.txt"), IoError);

  std::remove(path.c_str());
  std::remove("/tmp/blocklink_bad1.txt");
  std::remove("/tmp/blocklink_bad2.txt");
}

TEST_CASE("expected readout matches the variational expected latents") {
  ModelConfig cfg = small_cfg();
  SeededRng rng(6);
  Model m = Model::init(cfg, rng);
  AttentionTopology topo = ring_topology(cfg, 6);
  Tensor h = m.encode(nullptr, topo, false, nullptr);
  LatentSample s = m.expected(h);
  CHECK(s.z.shape() == std::vector<int>{8, 3});
  // b is a sigmoid: strictly inside the unit interval
  for (std::size_t i = 0; i < s.b.size(); ++i) {
    CHECK(s.b.data()[i] > 0.0);
    CHECK(s.b.data()[i] < 1.0);
  }
}
