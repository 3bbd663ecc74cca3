#pragma once

#include <cstdint>
#include <vector>

#include "blocklink/graph.hpp"
#include "blocklink/metrics.hpp"
#include "blocklink/model.hpp"
#include "blocklink/rng.hpp"
#include "blocklink/train.hpp"

namespace blocklink {

// Classical overlapping block model: edge logit is the bilinear form
// b~_i^T W~ b~_j with b~ = [b; 1] and W~ = [[W, U], [V^T, W_*]].
struct ClassicalOsbmParams {
  Tensor w;               // [K, K] interaction
  std::vector<double> u;  // sender propensities, K
  std::vector<double> v;  // receiver propensities, K
  double w_star = 0.0;    // global bias
  std::vector<double> alpha;  // prevalences in (0,1); carried, not sampled from

  void validate() const;
  Tensor augmented() const;  // [K+1, K+1]
};

double osbm_edge_logit(const std::vector<double>& bi, const std::vector<double>& bj,
                       const ClassicalOsbmParams& params);

enum class SyntheticMode { inner_product, full_osbm };
enum class SyntheticSampling { bernoulli, threshold };

struct SyntheticInstance {
  Tensor b_true;   // [N, K] binary memberships
  Graph graph;     // symmetric adjacency, zero diagonal
  EdgeList hidden;  // held-out unordered pairs, sorted
};

// Nodes of each community: near-equal contiguous blocks, with the 3 nodes
// before every other block boundary also joining the following block.
std::vector<std::vector<int>> synthetic_blocks(int n, int k);

// inner_product mode: p(i,j) = sigmoid(<b_i, b_j> + bias); full_osbm mode
// uses osbm_edge_logit (default parameters W = 2I, U = V = 0, W_* = bias
// when none are given). Sampling is a Bernoulli draw per pair or the
// deterministic threshold p > 1/2. hidden_fraction of all unordered pairs
// is then masked out uniformly.
SyntheticInstance generate_synthetic(int n, int k, SeededRng& rng, SyntheticMode mode, double bias,
                                     SyntheticSampling sampling, double hidden_fraction = 0.15,
                                     const ClassicalOsbmParams* osbm = nullptr);

// Deterministic readout with latent columns at and beyond `dims` zeroed,
// decoded to the full matrix of pair probabilities.
Tensor truncated_reconstruction(Model& model, const Tensor* features, const AttentionTopology& topo,
                                int dims);

struct SyntheticExperimentResult {
  SyntheticInstance instance;
  Model model;  // parameters restored to the best observed-pair AUC epoch
  AttentionTopology topo;
  std::vector<EpochRow> history;  // val_mrr column holds observed-pair AUC
  int best_epoch = -1;
  double best_observed_auc = 0.0;
  double hidden_auc = 0.0;
  double hidden_mrr = 0.0;
  std::size_t hidden_positives = 0;
  std::size_t hidden_negatives = 0;
};

// Masked-matrix experiment: train on every non-hidden pair with its true
// label (full-batch negative ELBO), select the epoch with the best
// observed-pair AUC, then score the hidden pairs. Each hidden positive is
// ranked against the full hidden non-edge list for the MRR.
SyntheticExperimentResult run_synthetic_experiment(int n, int k, SyntheticMode mode, double bias,
                                                   SyntheticSampling sampling, const TrainConfig& tcfg);

}  // namespace blocklink
