#include "blocklink/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "blocklink/errors.hpp"

namespace blocklink {

Graph make_graph(int num_nodes, EdgeList edges) {
  if (num_nodes < 0) throw ContractError("graph: negative node count");
  for (auto& e : edges) {
    if (e.first == e.second) throw ContractError("graph: self loop on node " + std::to_string(e.first));
    if (e.first < 0 || e.second < 0 || e.first >= num_nodes || e.second >= num_nodes)
      throw ContractError("graph: node id out of range: (" + std::to_string(e.first) + "," +
                          std::to_string(e.second) + ") with N=" + std::to_string(num_nodes));
    if (e.first > e.second) std::swap(e.first, e.second);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return Graph{num_nodes, std::move(edges)};
}

LoadedEdgeList load_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open edge list '" + path + "'");
  EdgeList edges;
  std::size_t dropped = 0;
  long long directive_n = -1;
  long long max_self_id = -1;
  bool saw_content = false;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;  // blank or comment-only
    if (!saw_content && first == "N") {
      saw_content = true;
      std::string rest;
      if (!(ls >> directive_n) || directive_n < 0 || (ls >> rest))
        throw ParseError(path + ":" + std::to_string(line_no) + ": malformed N directive");
      continue;
    }
    saw_content = true;
    long long u, v;
    std::string extra;
    try {
      std::size_t used = 0;
      u = std::stoll(first, &used);
      if (used != first.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected integer pair");
    }
    if (!(ls >> v) || (ls >> extra))
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected integer pair");
    if (u < 0 || v < 0) throw ParseError(path + ":" + std::to_string(line_no) + ": negative node id");
    if (u == v) {
      ++dropped;
      max_self_id = std::max(max_self_id, u);
      continue;
    }
    edges.emplace_back(static_cast<int>(u), static_cast<int>(v));
  }
  // A dropped self loop still names its node, so it counts toward N.
  long long max_id = max_self_id;
  for (const auto& e : edges) max_id = std::max({max_id, (long long)e.first, (long long)e.second});
  long long n = max_id + 1;
  if (directive_n >= 0) {
    if (directive_n < n)
      throw ParseError(path + ": N directive " + std::to_string(directive_n) +
                       " smaller than 1 + max node id " + std::to_string(max_id));
    n = directive_n;
  }
  return LoadedEdgeList{make_graph(static_cast<int>(n), std::move(edges)), dropped};
}

void save_edge_list(const Graph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write edge list '" + path + "'");
  out << "N " << g.num_nodes << "\n";
  for (const auto& e : g.edges) out << e.first << " " << e.second << "\n";
  if (!out) throw IoError("failed writing edge list '" + path + "'");
}

Tensor load_feature_csv(const std::string& path, int num_nodes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open feature csv '" + path + "'");
  std::vector<double> values;
  int cols = -1, rows = 0;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    int c = 0;
    while (std::getline(ls, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used != cell.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": bad number '" + cell + "'");
      }
      ++c;
    }
    if (cols < 0) cols = c;
    if (c != cols) throw ParseError(path + ":" + std::to_string(line_no) + ": ragged row");
    ++rows;
  }
  if (rows != num_nodes)
    throw ParseError(path + ": " + std::to_string(rows) + " rows for " + std::to_string(num_nodes) + " nodes");
  if (cols <= 0) throw ParseError(path + ": no feature columns");
  return Tensor::from({rows, cols}, std::move(values), false);
}

void save_matrix_csv(const Tensor& m, const std::string& path) {
  if (m.ndim() != 2) throw ContractError("save_matrix_csv: requires rank-2 tensor");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write csv '" + path + "'");
  char buf[40];
  const double* p = m.data();
  for (int i = 0; i < m.shape()[0]; ++i) {
    for (int j = 0; j < m.shape()[1]; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", p[static_cast<std::size_t>(i) * m.shape()[1] + j]);
      out << (j ? "," : "") << buf;
    }
    out << "\n";
  }
  if (!out) throw IoError("failed writing csv '" + path + "'");
}

AdjacencyIndex::AdjacencyIndex(int num_nodes, const EdgeList& edges) : num_nodes_(num_nodes) {
  std::vector<int> deg(num_nodes, 0);
  for (const auto& e : edges) {
    if (e.first < 0 || e.second < 0 || e.first >= num_nodes || e.second >= num_nodes)
      throw ContractError("index: node id out of range");
    if (e.first == e.second) throw ContractError("index: self loop");
    ++deg[e.first];
    ++deg[e.second];
  }
  offsets_.assign(num_nodes + 1, 0);
  for (int i = 0; i < num_nodes; ++i) offsets_[i + 1] = offsets_[i] + deg[i];
  neighbors_.assign(offsets_[num_nodes], 0);
  std::vector<int> fill(offsets_.begin(), offsets_.end() - 1);
  pairs_.reserve(edges.size() * 2);
  for (const auto& e : edges) {
    if (!pairs_.insert(pair_key(e.first, e.second)).second) continue;  // duplicate edge
    neighbors_[fill[e.first]++] = e.second;
    neighbors_[fill[e.second]++] = e.first;
    ++num_edges_;
  }
  for (int u = 0; u < num_nodes; ++u) std::sort(neighbors_.begin() + offsets_[u], neighbors_.begin() + fill[u]);
  // duplicates shrank some ranges; rebuild compactly if any were dropped
  if (num_edges_ != edges.size()) {
    std::vector<int> no, nn;
    no.assign(num_nodes + 1, 0);
    for (int u = 0; u < num_nodes; ++u) no[u + 1] = no[u] + (fill[u] - offsets_[u]);
    nn.reserve(no[num_nodes]);
    for (int u = 0; u < num_nodes; ++u)
      nn.insert(nn.end(), neighbors_.begin() + offsets_[u], neighbors_.begin() + fill[u]);
    offsets_ = std::move(no);
    neighbors_ = std::move(nn);
  }
}

int AdjacencyIndex::degree(int u) const {
  if (u < 0 || u >= num_nodes_) throw ContractError("index: node id out of range");
  return offsets_[u + 1] - offsets_[u];
}

std::pair<const int*, const int*> AdjacencyIndex::neighbors(int u) const {
  if (u < 0 || u >= num_nodes_) throw ContractError("index: node id out of range");
  return {neighbors_.data() + offsets_[u], neighbors_.data() + offsets_[u + 1]};
}

bool AdjacencyIndex::has_edge(int u, int v) const {
  if (u < 0 || v < 0 || u >= num_nodes_ || v >= num_nodes_) throw ContractError("index: node id out of range");
  if (u == v) return false;
  return pairs_.count(pair_key(u, v)) != 0;
}

EdgeSplit split_edges(const Graph& g, double r_train, double r_valid, double r_test, SeededRng& rng) {
  if (r_train < 0 || r_valid < 0 || r_test < 0 || std::fabs(r_train + r_valid + r_test - 1.0) > 1e-9)
    throw ContractError("split: ratios must be non-negative and sum to 1");
  EdgeList order = g.edges;
  rng.shuffle(order);
  const std::size_t E = order.size();
  const double ratios[3] = {r_train, r_valid, r_test};
  std::size_t counts[3];
  double rema[3];
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double exact = ratios[i] * static_cast<double>(E);
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    rema[i] = exact - std::floor(exact);
    assigned += counts[i];
  }
  // largest remainder, ties to the earlier bucket
  std::size_t left = E - assigned;
  int idx[3] = {0, 1, 2};
  std::stable_sort(idx, idx + 3, [&](int a, int b) { return rema[a] > rema[b]; });
  for (std::size_t i = 0; i < left; ++i) counts[idx[i % 3]] += 1;
  EdgeSplit s;
  s.seed = rng.seed();
  auto it = order.begin();
  s.train.assign(it, it + counts[0]);
  it += counts[0];
  s.valid.assign(it, it + counts[1]);
  it += counts[1];
  s.test.assign(it, it + counts[2]);
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.valid.begin(), s.valid.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

EdgeList sample_negatives_uniform(const AdjacencyIndex& index, int count, SeededRng& rng,
                                  const EdgeList* exclude, bool* allowed_duplicates) {
  if (count < 0) throw ContractError("negatives: negative count");
  const long long n = index.num_nodes();
  std::unordered_set<std::uint64_t> banned;
  if (exclude) {
    for (const auto& e : *exclude)
      if (!index.has_edge(e.first, e.second)) banned.insert(pair_key(e.first, e.second));
  }
  const long long total_pairs = n * (n - 1) / 2;
  const long long space = total_pairs - static_cast<long long>(index.num_edges()) -
                          static_cast<long long>(banned.size());
  if (allowed_duplicates) *allowed_duplicates = false;
  if (count == 0) return {};
  if (space <= 0) throw SamplingError("negatives: candidate space is empty");
  const bool with_replacement = space < 2LL * count;
  if (allowed_duplicates) *allowed_duplicates = with_replacement;

  EdgeList out;
  out.reserve(count);
  std::unordered_set<std::uint64_t> used;
  long long guard = 0;
  const long long guard_limit = 1000LL * count + 1000000LL;
  while (static_cast<int>(out.size()) < count) {
    if (++guard > guard_limit) throw SamplingError("negatives: rejection sampling stalled");
    int u = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    int v = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    if (u == v) continue;
    if (u > v) std::swap(u, v);
    if (index.has_edge(u, v)) continue;
    const std::uint64_t key = pair_key(u, v);
    if (banned.count(key)) continue;
    if (!with_replacement && !used.insert(key).second) continue;
    out.emplace_back(u, v);
  }
  return out;
}

}  // namespace blocklink
