#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "blocklink/graph.hpp"
#include "blocklink/metrics.hpp"
#include "blocklink/model.hpp"
#include "blocklink/rng.hpp"

namespace blocklink {

struct TrainConfig {
  ModelConfig model;
  double lr = 5e-3;
  double weight_decay = 0.0;
  double clip_norm = 5.0;
  int epochs = 200;
  int anneal_end = 80;     // 0 disables annealing (weight fixed at 1)
  int train_negatives = 1;  // uniform negatives per positive, per step
  int batch_size = 0;       // 0 = full batch
  int val_negatives = 100;  // candidates per validation positive
  std::uint64_t seed = 0;
};

struct EpochRow {
  int epoch = 0;
  LossBreakdown mean;    // per-step means over the epoch
  double val_mrr = 0.0;  // NaN when there is no validation split
};

struct TrainResult {
  Model model;  // parameters restored to the best validation epoch
  AttentionTopology topo;
  std::vector<EpochRow> history;
  int best_epoch = -1;  // -1 when no validation selection happened
  double best_val_mrr = 0.0;
};

// One deterministic scoring pass over every candidate pair, then ranking
// metrics; candidate lists come from the RankedEval.
Metrics evaluate_ranked(Model& model, const Tensor* features, const AttentionTopology& topo,
                        const RankedEval& eval, const std::vector<int>& hits_ks);

// SGVB loop: attention topology built once from the train edges, fresh
// uniform negatives each step (non-edges of the full observed graph), one
// latent sample per step, global-norm clipping, Adam. Keeps the parameters
// of the epoch with the best validation MRR. Non-finite loss aborts with the
// epoch index.
TrainResult train(const Graph& observed, const EdgeSplit& split, const Tensor* features,
                  const TrainConfig& cfg);

// Header comment with the topology counts, then one row per epoch:
// epoch,total,recon,kl_sticks,kl_memberships,kl_strengths,feat_recon,anneal_weight
void write_history_csv(const std::string& path, const AttentionTopology& topo,
                       const std::vector<EpochRow>& history);

}  // namespace blocklink
