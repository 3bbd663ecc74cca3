#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "blocklink/rng.hpp"
#include "blocklink/tensor.hpp"

namespace blocklink {

using Edge = std::pair<int, int>;
using EdgeList = std::vector<Edge>;

// Undirected simple graph. Edges are normalized (u < v), deduplicated and
// sorted; node ids are dense in [0, num_nodes).
struct Graph {
  int num_nodes = 0;
  EdgeList edges;
};

// Normalizes, deduplicates and validates. Self loops are a contract error
// here; only the file loader tolerates (and counts) them.
Graph make_graph(int num_nodes, EdgeList edges);

struct LoadedEdgeList {
  Graph graph;
  std::size_t self_loops_dropped = 0;
};

// Text format: '#' starts a comment, an optional first content line
// "N <count>" fixes the node count, every other content line is "u v".
// Duplicate and reversed-duplicate lines collapse; self loops are dropped
// and counted. Without a directive, num_nodes = 1 + max node id.
LoadedEdgeList load_edge_list(const std::string& path);
void save_edge_list(const Graph& g, const std::string& path);

// Comma-separated doubles, no header, row i holds node i. Returns [N, F].
Tensor load_feature_csv(const std::string& path, int num_nodes);
void save_matrix_csv(const Tensor& m, const std::string& path);

// CSR neighbor lists (sorted) plus a hashed pair set for O(1) membership.
class AdjacencyIndex {
 public:
  AdjacencyIndex() = default;
  AdjacencyIndex(int num_nodes, const EdgeList& edges);
  explicit AdjacencyIndex(const Graph& g) : AdjacencyIndex(g.num_nodes, g.edges) {}

  int num_nodes() const { return num_nodes_; }
  std::size_t num_edges() const { return num_edges_; }
  int degree(int u) const;
  // Sorted neighbor ids of u.
  std::pair<const int*, const int*> neighbors(int u) const;
  bool has_edge(int u, int v) const;

 private:
  int num_nodes_ = 0;
  std::size_t num_edges_ = 0;
  std::vector<int> offsets_, neighbors_;
  std::unordered_set<std::uint64_t> pairs_;
};

struct EdgeSplit {
  EdgeList train, valid, test;
  std::uint64_t seed = 0;
};

// Uniform partition by shuffled order; counts follow largest-remainder
// rounding of the ratios, so they are deterministic for a fixed seed.
EdgeSplit split_edges(const Graph& g, double r_train, double r_valid, double r_test, SeededRng& rng);

// Uniform non-edges of `index`, never colliding with `exclude`. Draws
// without replacement when the candidate space holds at least 2*count pairs;
// otherwise duplicates are allowed and *allowed_duplicates is set.
EdgeList sample_negatives_uniform(const AdjacencyIndex& index, int count, SeededRng& rng,
                                  const EdgeList* exclude = nullptr, bool* allowed_duplicates = nullptr);

inline std::uint64_t pair_key(int u, int v) {
  if (u > v) std::swap(u, v);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(u)) << 32) |
         static_cast<std::uint32_t>(v);
}

}  // namespace blocklink
