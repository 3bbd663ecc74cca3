#include "blocklink/topology.hpp"

#include <algorithm>
#include <queue>
#include <unordered_set>

#include "blocklink/errors.hpp"

namespace blocklink {

EdgeList expander_from_permutations(int num_nodes, const std::vector<std::vector<int>>& perms) {
  std::unordered_set<std::uint64_t> seen;
  EdgeList out;
  for (const auto& p : perms) {
    if (static_cast<int>(p.size()) != num_nodes) throw ContractError("expander: permutation length mismatch");
    std::vector<char> hit(num_nodes, 0);
    for (int x : p) {
      if (x < 0 || x >= num_nodes || hit[x]) throw ContractError("expander: not a permutation");
      hit[x] = 1;
    }
    for (int i = 0; i < num_nodes; ++i) {
      const int j = p[i];
      if (i == j) continue;
      if (seen.insert(pair_key(i, j)).second) out.emplace_back(std::min(i, j), std::max(i, j));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

EdgeList build_expander(int num_nodes, int d_exp, SeededRng& rng) {
  if (num_nodes < 2) throw ContractError("expander: need at least 2 nodes");
  if (d_exp < 0 || d_exp % 2 != 0) throw ContractError("expander: degree must be even and non-negative");
  std::vector<std::vector<int>> perms;
  std::vector<int> identity(num_nodes);
  for (int i = 0; i < num_nodes; ++i) identity[i] = i;
  for (int r = 0; r < d_exp / 2; ++r) {
    std::vector<int> p = identity;
    rng.shuffle(p);
    perms.push_back(std::move(p));
  }
  return expander_from_permutations(num_nodes, perms);
}

AttentionTopology build_topology(const EdgeList& local_edges, int num_nodes, const TopologyConfig& cfg,
                                 SeededRng* topology_rng) {
  if (num_nodes <= 0) throw ContractError("topology: needs at least one node");
  AttentionTopology t;
  t.num_nodes = num_nodes;

  std::unordered_set<std::uint64_t> taken;
  if (cfg.use_local) {
    for (auto e : local_edges) {
      if (e.first == e.second) throw ContractError("topology: self loop in local edges");
      if (e.first < 0 || e.second < 0 || e.first >= num_nodes || e.second >= num_nodes)
        throw ContractError("topology: local edge id out of range");
      if (e.first > e.second) std::swap(e.first, e.second);
      if (taken.insert(pair_key(e.first, e.second)).second) t.undirected_local.push_back(e);
    }
  }
  if (cfg.use_expander) {
    if (!topology_rng) throw ContractError("topology: rng required for the expander overlay");
    for (const auto& e : build_expander(num_nodes, cfg.d_exp, *topology_rng))
      if (taken.insert(pair_key(e.first, e.second)).second) t.undirected_expander.push_back(e);
  }
  std::sort(t.undirected_local.begin(), t.undirected_local.end());
  std::sort(t.undirected_expander.begin(), t.undirected_expander.end());

  struct Directed {
    int dst, src, type;
  };
  std::vector<Directed> dir;
  dir.reserve(2 * (t.undirected_local.size() + t.undirected_expander.size()) + (cfg.self_loops ? num_nodes : 0));
  for (const auto& e : t.undirected_local) {
    dir.push_back({e.second, e.first, static_cast<int>(EdgeType::local)});
    dir.push_back({e.first, e.second, static_cast<int>(EdgeType::local)});
  }
  for (const auto& e : t.undirected_expander) {
    dir.push_back({e.second, e.first, static_cast<int>(EdgeType::expander)});
    dir.push_back({e.first, e.second, static_cast<int>(EdgeType::expander)});
  }
  if (cfg.self_loops)
    for (int v = 0; v < num_nodes; ++v) dir.push_back({v, v, static_cast<int>(EdgeType::self)});

  std::sort(dir.begin(), dir.end(), [](const Directed& a, const Directed& b) {
    if (a.dst != b.dst) return a.dst < b.dst;
    if (a.src != b.src) return a.src < b.src;
    return a.type < b.type;
  });

  t.src.reserve(dir.size());
  t.dst.reserve(dir.size());
  t.type.reserve(dir.size());
  std::vector<char> covered(num_nodes, 0);
  for (const auto& d : dir) {
    t.src.push_back(d.src);
    t.dst.push_back(d.dst);
    t.type.push_back(d.type);
    covered[d.dst] = 1;
    if (d.type == static_cast<int>(EdgeType::local)) ++t.n_local;
    else if (d.type == static_cast<int>(EdgeType::expander)) ++t.n_expander;
    else ++t.n_self;
  }
  t.full_coverage = std::all_of(covered.begin(), covered.end(), [](char c) { return c != 0; });
  return t;
}

std::optional<int> bfs_diameter(int num_nodes, const EdgeList& edges) {
  if (num_nodes <= 0) throw ContractError("bfs_diameter: needs at least one node");
  AdjacencyIndex idx(num_nodes, edges);
  std::vector<int> dist(num_nodes);
  int diameter = 0;
  std::vector<int> queue;
  queue.reserve(num_nodes);
  for (int s = 0; s < num_nodes; ++s) {
    std::fill(dist.begin(), dist.end(), -1);
    queue.clear();
    queue.push_back(s);
    dist[s] = 0;
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
      const int u = queue[qi];
      auto [b, e] = idx.neighbors(u);
      for (const int* p = b; p != e; ++p) {
        if (dist[*p] < 0) {
          dist[*p] = dist[u] + 1;
          queue.push_back(*p);
        }
      }
    }
    if (static_cast<int>(queue.size()) != num_nodes) return std::nullopt;
    diameter = std::max(diameter, dist[queue.back()]);
  }
  return diameter;
}

std::vector<int> degree_histogram(int num_nodes, const EdgeList& edges) {
  std::vector<int> deg(num_nodes, 0);
  for (const auto& e : edges) {
    if (e.first < 0 || e.second < 0 || e.first >= num_nodes || e.second >= num_nodes)
      throw ContractError("degree_histogram: node id out of range");
    ++deg[e.first];
    ++deg[e.second];
  }
  int dmax = 0;
  for (int d : deg) dmax = std::max(dmax, d);
  std::vector<int> hist(dmax + 1, 0);
  for (int d : deg) ++hist[d];
  return hist;
}

long long count_attention_ops(const AttentionTopology& topo, int heads, int head_dim) {
  if (heads <= 0 || head_dim <= 0) throw ContractError("count_attention_ops: heads and head_dim must be positive");
  return static_cast<long long>(topo.num_edges()) * heads * head_dim;
}

}  // namespace blocklink
