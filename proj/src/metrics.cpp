#include "blocklink/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <unordered_set>

#include "blocklink/errors.hpp"

namespace blocklink {

double auc(const std::vector<double>& pos_scores, const std::vector<double>& neg_scores) {
  if (pos_scores.empty() || neg_scores.empty())
    throw ContractError("auc: both score sets must be nonempty");
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  items.reserve(pos_scores.size() + neg_scores.size());
  for (double s : pos_scores) items.push_back({s, true});
  for (double s : neg_scores) items.push_back({s, false});
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score < b.score; });
  long double rank_sum_pos = 0.0L;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) ++j;
    // Ranks i+1 .. j share the midrank (i + j + 1) / 2.
    long double midrank = (static_cast<long double>(i) + static_cast<long double>(j) + 1.0L) / 2.0L;
    for (std::size_t t = i; t < j; ++t)
      if (items[t].positive) rank_sum_pos += midrank;
    i = j;
  }
  long double np = static_cast<long double>(pos_scores.size());
  long double nn = static_cast<long double>(neg_scores.size());
  return static_cast<double>((rank_sum_pos - np * (np + 1.0L) / 2.0L) / (np * nn));
}

long long rank_of(double pos_score, const std::vector<double>& neg_scores) {
  long long above = 0, ties = 0;
  for (double s : neg_scores) {
    if (s > pos_score)
      ++above;
    else if (s == pos_score)
      ++ties;
  }
  return 1 + above + (ties + 1) / 2;
}

double mrr_from_ranks(const std::vector<long long>& ranks) {
  if (ranks.empty()) throw ContractError("mrr: no ranks");
  long double acc = 0.0L;
  for (long long r : ranks) {
    if (r < 1) throw ContractError("mrr: ranks must be at least 1");
    acc += 1.0L / static_cast<long double>(r);
  }
  return static_cast<double>(acc / static_cast<long double>(ranks.size()));
}

std::map<int, double> hits_from_ranks(const std::vector<long long>& ranks, const std::vector<int>& ks) {
  if (ranks.empty()) throw ContractError("hits: no ranks");
  std::map<int, double> out;
  for (int k : ks) {
    if (k < 1) throw ContractError("hits: k must be at least 1");
    long long hit = 0;
    for (long long r : ranks)
      if (r <= k) ++hit;
    out[k] = static_cast<double>(hit) / static_cast<double>(ranks.size());
  }
  return out;
}

Metrics ranking_metrics(const std::vector<double>& pos_scores,
                        const std::vector<std::vector<double>>& neg_scores_per_pos,
                        const std::vector<int>& hits_ks) {
  if (pos_scores.size() != neg_scores_per_pos.size())
    throw DimensionError("ranking_metrics: one negative list per positive required");
  std::vector<double> all_neg;
  for (const auto& lst : neg_scores_per_pos) all_neg.insert(all_neg.end(), lst.begin(), lst.end());
  Metrics m;
  m.auc = auc(pos_scores, all_neg);
  m.ranks.reserve(pos_scores.size());
  for (std::size_t i = 0; i < pos_scores.size(); ++i)
    m.ranks.push_back(rank_of(pos_scores[i], neg_scores_per_pos[i]));
  m.mrr = mrr_from_ranks(m.ranks);
  m.hits = hits_from_ranks(m.ranks, hits_ks);
  return m;
}

Heuristic heuristic_from_name(const std::string& name) {
  if (name == "cn") return Heuristic::common_neighbors;
  if (name == "aa") return Heuristic::adamic_adar;
  if (name == "ra") return Heuristic::resource_allocation;
  throw ConfigError("unknown heuristic '" + name + "' (expected cn, aa or ra)");
}

namespace {

struct PairStats {
  long long cn = 0;
  double ra = 0.0;
  double aa = 0.0;
};

PairStats common_neighbor_stats(const AdjacencyIndex& index, int u, int v, bool want_aa) {
  PairStats s;
  auto [ub, ue] = index.neighbors(u);
  auto [vb, ve] = index.neighbors(v);
  while (ub != ue && vb != ve) {
    if (*ub < *vb) {
      ++ub;
    } else if (*vb < *ub) {
      ++vb;
    } else {
      int w = *ub;
      int deg = index.degree(w);
      ++s.cn;
      s.ra += 1.0 / static_cast<double>(deg);
      if (want_aa) {
        if (deg < 2) {
          if (u != v)
            throw ContractError("adamic-adar: common neighbor of distinct endpoints has degree < 2");
          s.aa += 1.0 / std::log(2.0);
        } else {
          s.aa += 1.0 / std::log(static_cast<double>(deg));
        }
      }
      ++ub;
      ++vb;
    }
  }
  return s;
}

}  // namespace

double heuristic_score(Heuristic kind, const AdjacencyIndex& index, int u, int v) {
  if (u < 0 || v < 0 || u >= index.num_nodes() || v >= index.num_nodes())
    throw ContractError("heuristic_score: node id out of range");
  PairStats s = common_neighbor_stats(index, u, v, kind == Heuristic::adamic_adar);
  switch (kind) {
    case Heuristic::common_neighbors:
      return static_cast<double>(s.cn);
    case Heuristic::adamic_adar:
      return s.aa;
    case Heuristic::resource_allocation:
      return s.ra;
  }
  throw ContractError("heuristic_score: unreachable");
}

RankedEval uniform_negatives(const AdjacencyIndex& observed, const EdgeList& positives, int n_neg,
                             SeededRng& rng) {
  if (n_neg < 1) throw ContractError("uniform_negatives: n_neg must be at least 1");
  RankedEval out;
  out.positives = positives;
  out.negatives.reserve(positives.size());
  for (std::size_t i = 0; i < positives.size(); ++i)
    out.negatives.push_back(sample_negatives_uniform(observed, n_neg, rng));
  return out;
}

RankedEval heart_negatives(const AdjacencyIndex& observed, const EdgeList& positives, int n_neg,
                           SeededRng& rng) {
  if (n_neg < 1) throw ContractError("heart_negatives: n_neg must be at least 1");
  const int n = observed.num_nodes();
  RankedEval out;
  out.positives = positives;
  out.negatives.reserve(positives.size());
  std::size_t short_positives = 0;

  struct Cand {
    double ra;
    long long cn;
    int w;
  };
  for (const Edge& pos : positives) {
    const int u = pos.first, v = pos.second;
    if (u < 0 || v < 0 || u >= n || v >= n) throw ContractError("heart_negatives: node id out of range");
    EdgeList chosen;
    std::unordered_set<std::uint64_t> taken;
    taken.insert(pair_key(u, v));

    auto corrupt = [&](int fixed, int other) {
      std::vector<Cand> cands;
      cands.reserve(static_cast<std::size_t>(n));
      for (int w = 0; w < n; ++w) {
        if (w == fixed || w == other) continue;
        if (observed.has_edge(fixed, w)) continue;
        PairStats s = common_neighbor_stats(observed, fixed, w, false);
        cands.push_back({s.ra, s.cn, w});
      }
      std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.ra != b.ra) return a.ra > b.ra;
        if (a.cn != b.cn) return a.cn > b.cn;
        return a.w < b.w;
      });
      int take = n_neg / 2;
      for (const Cand& c : cands) {
        if (take == 0) break;
        int a = fixed < c.w ? fixed : c.w;
        int b = fixed < c.w ? c.w : fixed;
        if (!taken.insert(pair_key(a, b)).second) continue;
        chosen.push_back({a, b});
        --take;
      }
    };
    corrupt(u, v);
    corrupt(v, u);

    // Uniform fill up to n_neg: rejection first, then exhaustive sweep.
    std::size_t need = static_cast<std::size_t>(n_neg) - std::min<std::size_t>(n_neg, chosen.size());
    long long guard = 100LL * static_cast<long long>(need) + 10000;
    while (need > 0 && guard > 0) {
      --guard;
      int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
      int b = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
      if (a == b) continue;
      if (a > b) std::swap(a, b);
      if (observed.has_edge(a, b)) continue;
      if (!taken.insert(pair_key(a, b)).second) continue;
      chosen.push_back({a, b});
      --need;
    }
    if (need > 0) {
      EdgeList rest;
      for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) {
          if (observed.has_edge(a, b)) continue;
          if (taken.count(pair_key(a, b))) continue;
          rest.push_back({a, b});
        }
      rng.shuffle(rest);
      for (const Edge& e : rest) {
        if (need == 0) break;
        if (!taken.insert(pair_key(e.first, e.second)).second) continue;
        chosen.push_back(e);
        --need;
      }
      if (need > 0) ++short_positives;
    }
    out.negatives.push_back(std::move(chosen));
  }
  if (short_positives > 0)
    std::cerr << "warning: pair space too small, " << short_positives << " positive(s) received fewer than "
              << n_neg << " candidates\n";
  return out;
}

}  // namespace blocklink
