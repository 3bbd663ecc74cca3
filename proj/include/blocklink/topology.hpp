#pragma once

#include <optional>
#include <vector>

#include "blocklink/graph.hpp"
#include "blocklink/rng.hpp"

namespace blocklink {

// Attention edge classes. On a local/expander collision the local label wins.
enum class EdgeType : int { local = 0, expander = 1, self = 2 };

// d_exp/2 uniform permutations; each contributes undirected {i, pi(i)} with
// self-maps and duplicates dropped, so every degree stays <= d_exp.
EdgeList expander_from_permutations(int num_nodes, const std::vector<std::vector<int>>& perms);
EdgeList build_expander(int num_nodes, int d_exp, SeededRng& rng);

struct TopologyConfig {
  bool use_local = true;     // off under the no_local ablation
  bool use_expander = true;  // off under the no_expander ablation
  bool self_loops = true;
  int d_exp = 8;
};

// Directed attention graph: two directed edges per undirected edge plus
// optional self edges, sorted by (dst, src) for fixed reduction order.
struct AttentionTopology {
  int num_nodes = 0;
  std::vector<int> src, dst, type;
  std::size_t n_local = 0, n_expander = 0, n_self = 0;  // directed counts
  bool full_coverage = false;                            // every node has an in-edge
  EdgeList undirected_local, undirected_expander;        // post-precedence classes

  std::size_t num_edges() const { return src.size(); }
};

AttentionTopology build_topology(const EdgeList& local_edges, int num_nodes, const TopologyConfig& cfg,
                                 SeededRng* topology_rng);

// Exact eccentricity sweep (BFS from every node); nullopt when disconnected.
std::optional<int> bfs_diameter(int num_nodes, const EdgeList& edges);

// counts[d] = number of nodes with degree d.
std::vector<int> degree_histogram(int num_nodes, const EdgeList& edges);

// Score work per attention layer: directed edge count * heads * head_dim.
long long count_attention_ops(const AttentionTopology& topo, int heads, int head_dim);

}  // namespace blocklink
