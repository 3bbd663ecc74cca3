#include "blocklink/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "blocklink/errors.hpp"
#include "blocklink/special.hpp"

namespace blocklink {

void ClassicalOsbmParams::validate() const {
  if (w.ndim() != 2 || w.shape()[0] != w.shape()[1])
    throw DimensionError("osbm params: W must be square, got " + w.shape_str());
  std::size_t k = static_cast<std::size_t>(w.shape()[0]);
  if (u.size() != k || v.size() != k)
    throw DimensionError("osbm params: U and V must have length K");
  if (!alpha.empty()) {
    if (alpha.size() != k) throw DimensionError("osbm params: alpha must have length K");
    for (double a : alpha)
      if (!(a > 0.0 && a < 1.0)) throw ContractError("osbm params: alpha entries must lie in (0,1)");
  }
}

Tensor ClassicalOsbmParams::augmented() const {
  validate();
  int k = w.shape()[0];
  Tensor wt({k + 1, k + 1}, 0.0, false);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) wt.vec()[i * (k + 1) + j] = w.vec()[i * k + j];
  for (int i = 0; i < k; ++i) {
    wt.vec()[i * (k + 1) + k] = u[i];
    wt.vec()[k * (k + 1) + i] = v[i];
  }
  wt.vec()[k * (k + 1) + k] = w_star;
  return wt;
}

double osbm_edge_logit(const std::vector<double>& bi, const std::vector<double>& bj,
                       const ClassicalOsbmParams& params) {
  std::size_t k = static_cast<std::size_t>(params.w.shape()[0]);
  if (bi.size() != k || bj.size() != k)
    throw DimensionError("osbm_edge_logit: membership length does not match K");
  for (double x : bi)
    if (x != 0.0 && x != 1.0) throw ContractError("osbm_edge_logit: memberships must be binary");
  for (double x : bj)
    if (x != 0.0 && x != 1.0) throw ContractError("osbm_edge_logit: memberships must be binary");
  Tensor wt = params.augmented();
  std::vector<double> bti(bi), btj(bj);
  bti.push_back(1.0);
  btj.push_back(1.0);
  double acc = 0.0;
  for (std::size_t r = 0; r <= k; ++r) {
    if (bti[r] == 0.0) continue;
    for (std::size_t c = 0; c <= k; ++c) acc += wt.vec()[r * (k + 1) + c] * btj[c];
  }
  return acc;
}

std::vector<std::vector<int>> synthetic_blocks(int n, int k) {
  if (n < 1 || k < 1 || k > n) throw ContractError("synthetic_blocks: need 1 <= k <= n");
  std::vector<std::vector<int>> blocks(k);
  int base = n / k, rem = n % k, at = 0;
  std::vector<int> starts(k), sizes(k);
  for (int b = 0; b < k; ++b) {
    sizes[b] = base + (b < rem ? 1 : 0);
    starts[b] = at;
    at += sizes[b];
  }
  for (int b = 0; b < k; ++b)
    for (int i = starts[b]; i < starts[b] + sizes[b]; ++i) blocks[b].push_back(i);
  // Every other boundary overlaps: the 3 nodes before boundary b also join
  // block b (b = 1, 3, 5, ...).
  for (int b = 1; b < k; b += 2) {
    int overlap = std::min(3, sizes[b - 1]);
    for (int i = starts[b] - overlap; i < starts[b]; ++i) blocks[b].push_back(i);
    std::sort(blocks[b].begin(), blocks[b].end());
  }
  return blocks;
}

SyntheticInstance generate_synthetic(int n, int k, SeededRng& rng, SyntheticMode mode, double bias,
                                     SyntheticSampling sampling, double hidden_fraction,
                                     const ClassicalOsbmParams* osbm) {
  if (n < 1 || k < 1 || k > n) throw ContractError("generate_synthetic: need 1 <= k <= n");
  if (hidden_fraction < 0.0 || hidden_fraction >= 1.0)
    throw ContractError("generate_synthetic: hidden_fraction must lie in [0,1)");

  SyntheticInstance inst;
  inst.b_true = Tensor({n, k}, 0.0, false);
  std::vector<std::vector<int>> blocks = synthetic_blocks(n, k);
  for (int b = 0; b < k; ++b)
    for (int i : blocks[b]) inst.b_true.vec()[i * k + b] = 1.0;

  ClassicalOsbmParams defaults;
  if (mode == SyntheticMode::full_osbm && osbm == nullptr) {
    defaults.w = Tensor({k, k}, 0.0, false);
    for (int i = 0; i < k; ++i) defaults.w.vec()[i * k + i] = 2.0;
    defaults.u.assign(k, 0.0);
    defaults.v.assign(k, 0.0);
    defaults.w_star = bias;
    osbm = &defaults;
  }

  EdgeList edges;
  std::vector<double> bi(k), bj(k);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double logit = 0.0;
      if (mode == SyntheticMode::inner_product) {
        for (int c = 0; c < k; ++c)
          logit += inst.b_true.vec()[i * k + c] * inst.b_true.vec()[j * k + c];
        logit += bias;
      } else {
        for (int c = 0; c < k; ++c) {
          bi[c] = inst.b_true.vec()[i * k + c];
          bj[c] = inst.b_true.vec()[j * k + c];
        }
        logit = osbm_edge_logit(bi, bj, *osbm);
      }
      double p = sigmoid(logit);
      bool edge = sampling == SyntheticSampling::bernoulli ? rng.uniform01() < p : p > 0.5;
      if (edge) edges.push_back({i, j});
    }
  }
  inst.graph = make_graph(n, std::move(edges));

  EdgeList all_pairs;
  all_pairs.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) all_pairs.push_back({i, j});
  long long m = std::llround(hidden_fraction * static_cast<double>(all_pairs.size()));
  rng.shuffle(all_pairs);
  inst.hidden.assign(all_pairs.begin(), all_pairs.begin() + m);
  std::sort(inst.hidden.begin(), inst.hidden.end());
  return inst;
}

Tensor truncated_reconstruction(Model& model, const Tensor* features, const AttentionTopology& topo,
                                int dims) {
  if (dims < 0 || dims > model.cfg.K)
    throw ContractError("truncated_reconstruction: dims must lie in [0, K]");
  NoGradGuard guard;
  Tensor h = model.encode(features, topo, false, nullptr);
  LatentSample s = model.expected(h);
  const int n = model.cfg.num_nodes, k = model.cfg.K;
  Tensor z_trunc({n, k}, 0.0, false);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < dims; ++c) z_trunc.vec()[i * k + c] = s.z.vec()[i * k + c];
  Tensor zt = decode(model.params, z_trunc);
  const int d = zt.shape()[1];
  Tensor probs({n, n}, 0.0, false);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double dot = 0.0;
      for (int c = 0; c < d; ++c) dot += zt.vec()[i * d + c] * zt.vec()[j * d + c];
      probs.vec()[i * n + j] = sigmoid(dot);
    }
  return probs;
}

SyntheticExperimentResult run_synthetic_experiment(int n, int k, SyntheticMode mode, double bias,
                                                   SyntheticSampling sampling, const TrainConfig& tcfg) {
  if (tcfg.epochs < 1) throw ConfigError("synthetic experiment: epochs must be at least 1");
  SeededRng root(tcfg.seed);
  SeededRng gen_rng = root.substream(Stream::generate);
  SeededRng topo_rng = root.substream(Stream::topology);
  SeededRng init_rng = root.substream(Stream::init);
  SeededRng noise_rng = root.substream(Stream::noise);

  SyntheticExperimentResult out;
  out.instance = generate_synthetic(n, k, gen_rng, mode, bias, sampling);

  std::unordered_set<std::uint64_t> hidden_set;
  for (const Edge& e : out.instance.hidden) hidden_set.insert(pair_key(e.first, e.second));
  AdjacencyIndex adj(out.instance.graph);

  std::vector<int> us, vs;
  std::vector<double> labels;
  EdgeList observed_edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      if (hidden_set.count(pair_key(i, j))) continue;
      bool edge = adj.has_edge(i, j);
      us.push_back(i);
      vs.push_back(j);
      labels.push_back(edge ? 1.0 : 0.0);
      if (edge) observed_edges.push_back({i, j});
    }
  if (observed_edges.empty()) throw ContractError("synthetic experiment: no observed edges to train on");

  ModelConfig mcfg = tcfg.model;
  mcfg.num_nodes = n;
  mcfg.K = k;
  mcfg.feat_dim = 0;
  mcfg.validate();
  out.topo = build_topology(observed_edges, n, mcfg.topology(), &topo_rng);
  out.model = Model::init(mcfg, init_rng);
  Model& model = out.model;

  std::vector<double> pos_obs, neg_obs;  // scratch for the per-epoch AUC
  std::map<std::string, std::vector<double>> best_params;
  EncoderState best_state;
  out.best_observed_auc = -std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    double anneal_w = tcfg.anneal_end == 0 ? 1.0 : anneal_weight(epoch, tcfg.anneal_end);
    Tensor h = model.encode(nullptr, out.topo, true, &noise_rng);
    LatentNoise noise = draw_latent_noise(n, k, noise_rng);
    LatentSample s = model.sample(h, noise);
    ElboLoss loss = model.loss(s, us, vs, labels, nullptr, anneal_w);
    if (!std::isfinite(loss.parts.total))
      throw NumericError("synthetic experiment: loss diverged at epoch " + std::to_string(epoch));
    GradientMap grads = backward(loss.total, model.params);
    clip_global_norm(grads, tcfg.clip_norm);
    adam_step(model.params, grads, tcfg.lr, {0.9, 0.999}, 1e-8, tcfg.weight_decay);

    std::vector<double> scores = model.score_pairs(nullptr, out.topo, us, vs);
    pos_obs.clear();
    neg_obs.clear();
    for (std::size_t i = 0; i < scores.size(); ++i)
      (labels[i] == 1.0 ? pos_obs : neg_obs).push_back(scores[i]);
    double observed_auc = auc(pos_obs, neg_obs);

    EpochRow row;
    row.epoch = epoch;
    row.mean = loss.parts;
    row.val_mrr = observed_auc;
    out.history.push_back(row);

    if (observed_auc > out.best_observed_auc) {
      out.best_observed_auc = observed_auc;
      out.best_epoch = epoch;
      best_params = model.params.snapshot_values();
      best_state = model.state;
    }
  }
  model.params.restore_values(best_params);
  model.state = best_state;

  std::vector<int> hu, hv;
  std::vector<bool> hlabel;
  for (const Edge& e : out.instance.hidden) {
    hu.push_back(e.first);
    hv.push_back(e.second);
    hlabel.push_back(adj.has_edge(e.first, e.second));
  }
  std::vector<double> hscores = model.score_pairs(nullptr, out.topo, hu, hv);
  std::vector<double> hpos, hneg;
  for (std::size_t i = 0; i < hscores.size(); ++i) (hlabel[i] ? hpos : hneg).push_back(hscores[i]);
  out.hidden_positives = hpos.size();
  out.hidden_negatives = hneg.size();
  if (hpos.empty() || hneg.empty())
    throw ContractError("synthetic experiment: hidden mask lacks one of the classes");
  out.hidden_auc = auc(hpos, hneg);
  std::vector<long long> ranks;
  for (double p : hpos) ranks.push_back(rank_of(p, hneg));
  out.hidden_mrr = mrr_from_ranks(ranks);
  return out;
}

}  // namespace blocklink
