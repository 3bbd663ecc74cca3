#include "blocklink/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "blocklink/errors.hpp"

namespace blocklink {

Metrics evaluate_ranked(Model& model, const Tensor* features, const AttentionTopology& topo,
                        const RankedEval& eval, const std::vector<int>& hits_ks) {
  if (eval.positives.empty()) throw ContractError("evaluate_ranked: no positives");
  if (eval.negatives.size() != eval.positives.size())
    throw ContractError("evaluate_ranked: one candidate list per positive required");
  std::vector<int> us, vs;
  for (const Edge& e : eval.positives) {
    us.push_back(e.first);
    vs.push_back(e.second);
  }
  for (const EdgeList& lst : eval.negatives)
    for (const Edge& e : lst) {
      us.push_back(e.first);
      vs.push_back(e.second);
    }
  std::vector<double> scores = model.score_pairs(features, topo, us, vs);
  std::size_t p = eval.positives.size();
  std::vector<double> pos_scores(scores.begin(), scores.begin() + p);
  std::vector<std::vector<double>> neg_scores;
  neg_scores.reserve(p);
  std::size_t at = p;
  for (const EdgeList& lst : eval.negatives) {
    neg_scores.emplace_back(scores.begin() + at, scores.begin() + at + lst.size());
    at += lst.size();
  }
  return ranking_metrics(pos_scores, neg_scores, hits_ks);
}

TrainResult train(const Graph& observed, const EdgeSplit& split, const Tensor* features,
                  const TrainConfig& cfg) {
  if (split.train.empty()) throw ContractError("train: empty train split");
  if (cfg.epochs < 1) throw ConfigError("train: epochs must be at least 1");
  if (cfg.train_negatives < 1) throw ConfigError("train: need at least one negative per positive");
  if (cfg.batch_size < 0) throw ConfigError("train: batch_size must be non-negative");
  if (cfg.val_negatives < 1) throw ConfigError("train: val_negatives must be at least 1");
  if (!(cfg.lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (cfg.weight_decay < 0.0) throw ConfigError("train: weight_decay must be non-negative");
  if (!(cfg.clip_norm > 0.0)) throw ConfigError("train: clip_norm must be positive");
  if (cfg.anneal_end < 0) throw ConfigError("train: anneal_end must be non-negative");

  SeededRng root(cfg.seed);
  SeededRng topo_rng = root.substream(Stream::topology);
  SeededRng init_rng = root.substream(Stream::init);
  SeededRng noise_rng = root.substream(Stream::noise);
  SeededRng sampling_rng = root.substream(Stream::sampling);
  SeededRng eval_rng = root.substream(Stream::evaluation);

  TrainResult out;
  out.topo = build_topology(split.train, observed.num_nodes, cfg.model.topology(), &topo_rng);
  out.model = Model::init(cfg.model, init_rng);
  Model& model = out.model;

  AdjacencyIndex observed_index(observed);
  const int n_train = static_cast<int>(split.train.size());
  const int batch = cfg.batch_size == 0 ? n_train : std::min(cfg.batch_size, n_train);

  std::map<std::string, std::vector<double>> best_params;
  EncoderState best_state;
  out.best_val_mrr = -std::numeric_limits<double>::infinity();

  std::vector<int> order(n_train);
  for (int i = 0; i < n_train; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double anneal_w = cfg.anneal_end == 0 ? 1.0 : anneal_weight(epoch, cfg.anneal_end);
    if (batch < n_train) sampling_rng.shuffle(order);

    LossBreakdown sums;
    int steps = 0;
    for (int start = 0; start < n_train; start += batch) {
      int stop = std::min(start + batch, n_train);
      std::vector<int> us, vs;
      std::vector<double> labels;
      for (int i = start; i < stop; ++i) {
        const Edge& e = split.train[order[i]];
        us.push_back(e.first);
        vs.push_back(e.second);
        labels.push_back(1.0);
      }
      int n_neg = (stop - start) * cfg.train_negatives;
      for (const Edge& e : sample_negatives_uniform(observed_index, n_neg, sampling_rng)) {
        us.push_back(e.first);
        vs.push_back(e.second);
        labels.push_back(0.0);
      }

      ElboLoss loss;
      try {
        Tensor h = model.encode(features, out.topo, true, &noise_rng);
        LatentNoise noise = draw_latent_noise(cfg.model.num_nodes, cfg.model.K, noise_rng);
        LatentSample s = model.sample(h, noise);
        loss = model.loss(s, us, vs, labels, features, anneal_w);
      } catch (const NumericError& e) {
        // a numeric failure inside the step means the parameters diverged
        throw NumericError("train: loss diverged at epoch " + std::to_string(epoch) +
                           " (" + e.what() + ")");
      }
      if (!std::isfinite(loss.parts.total))
        throw NumericError("train: loss diverged at epoch " + std::to_string(epoch));

      GradientMap grads = backward(loss.total, model.params);
      clip_global_norm(grads, cfg.clip_norm);
      adam_step(model.params, grads, cfg.lr, {0.9, 0.999}, 1e-8, cfg.weight_decay);

      sums.recon += loss.parts.recon;
      sums.kl_sticks += loss.parts.kl_sticks;
      sums.kl_memberships += loss.parts.kl_memberships;
      sums.kl_strengths += loss.parts.kl_strengths;
      sums.feat_recon += loss.parts.feat_recon;
      sums.total += loss.parts.total;
      ++steps;
    }

    EpochRow row;
    row.epoch = epoch;
    row.mean.recon = sums.recon / steps;
    row.mean.kl_sticks = sums.kl_sticks / steps;
    row.mean.kl_memberships = sums.kl_memberships / steps;
    row.mean.kl_strengths = sums.kl_strengths / steps;
    row.mean.feat_recon = sums.feat_recon / steps;
    row.mean.total = sums.total / steps;
    row.mean.anneal_weight = anneal_w;

    if (!split.valid.empty()) {
      RankedEval val = uniform_negatives(observed_index, split.valid, cfg.val_negatives, eval_rng);
      Metrics m = evaluate_ranked(model, features, out.topo, val, {10});
      row.val_mrr = m.mrr;
      if (m.mrr > out.best_val_mrr) {
        out.best_val_mrr = m.mrr;
        out.best_epoch = epoch;
        best_params = model.params.snapshot_values();
        best_state = model.state;
      }
    } else {
      row.val_mrr = std::numeric_limits<double>::quiet_NaN();
    }
    out.history.push_back(row);
  }

  if (out.best_epoch >= 0) {
    model.params.restore_values(best_params);
    model.state = best_state;
  }
  return out;
}

void write_history_csv(const std::string& path, const AttentionTopology& topo,
                       const std::vector<EpochRow>& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write history: " + path);
  out << "# topology nodes=" << topo.num_nodes << " undirected_local=" << topo.undirected_local.size()
      << " undirected_expander=" << topo.undirected_expander.size() << " directed_local=" << topo.n_local
      << " directed_expander=" << topo.n_expander << " self=" << topo.n_self
      << " full_coverage=" << (topo.full_coverage ? 1 : 0) << "\n";
  out << "epoch,total,recon,kl_sticks,kl_memberships,kl_strengths,feat_recon,anneal_weight\n";
  char buf[512];
  for (const EpochRow& r : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch,
                  r.mean.total, r.mean.recon, r.mean.kl_sticks, r.mean.kl_memberships,
                  r.mean.kl_strengths, r.mean.feat_recon, r.mean.anneal_weight);
    out << buf;
  }
  if (!out) throw IoError("failed while writing history: " + path);
}

}  // namespace blocklink
