#pragma once

#include <map>
#include <string>
#include <vector>

#include "blocklink/graph.hpp"
#include "blocklink/rng.hpp"

namespace blocklink {

// Probability that a positive outranks a negative, ties counting one half;
// computed in the midrank form of the rank-sum statistic.
double auc(const std::vector<double>& pos_scores, const std::vector<double>& neg_scores);

// Rank of the positive within {positive} plus its negatives: ties share the
// average rank, which is rounded up to an integer.
long long rank_of(double pos_score, const std::vector<double>& neg_scores);

double mrr_from_ranks(const std::vector<long long>& ranks);
std::map<int, double> hits_from_ranks(const std::vector<long long>& ranks, const std::vector<int>& ks);

struct Metrics {
  double auc = 0.0;
  double mrr = 0.0;
  std::map<int, double> hits;
  std::vector<long long> ranks;
};

// One candidate list per positive pair.
struct RankedEval {
  EdgeList positives;
  std::vector<EdgeList> negatives;
};

// AUC over all scores pooled, MRR and Hits@K over per-positive ranks.
Metrics ranking_metrics(const std::vector<double>& pos_scores,
                        const std::vector<std::vector<double>>& neg_scores_per_pos,
                        const std::vector<int>& hits_ks);

enum class Heuristic { common_neighbors, adamic_adar, resource_allocation };
Heuristic heuristic_from_name(const std::string& name);  // cn | aa | ra

// Over common neighbors w of (u, v): count, sum of 1/log(deg w), or sum of
// 1/deg w. A common neighbor of distinct endpoints always has degree >= 2.
double heuristic_score(Heuristic kind, const AdjacencyIndex& index, int u, int v);

// Fresh uniform non-edges of `observed` per positive; candidates are never
// observed edges or self pairs.
RankedEval uniform_negatives(const AdjacencyIndex& observed, const EdgeList& positives, int n_neg,
                             SeededRng& rng);

// Hard candidates from endpoint corruptions (u,w) and (w,v), ranked by
// resource allocation (ties: common neighbors, then node id), top half of
// n_neg per endpoint, uniform fill for any shortfall. Warns and returns what
// exists when the pair space cannot supply n_neg.
RankedEval heart_negatives(const AdjacencyIndex& observed, const EdgeList& positives, int n_neg,
                           SeededRng& rng);

}  // namespace blocklink
