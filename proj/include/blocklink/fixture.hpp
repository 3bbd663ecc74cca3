#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "blocklink/graph.hpp"
#include "blocklink/model.hpp"
#include "blocklink/topology.hpp"
#include "blocklink/variational.hpp"

namespace blocklink {

// Small fixed instance for whole-model gradient verification: 12 nodes,
// 3 communities, 2 layers, 2 heads of width 4, 5 features, frozen noise,
// dropout 0 so the objective is a deterministic function of the parameters.
struct GradCheckFixture {
  Graph graph;
  Tensor features;
  AttentionTopology topo;
  Model model;
  LatentNoise noise;
  std::vector<int> us, vs;
  std::vector<double> labels;
  double anneal_w = 1.0;

  Tensor loss();  // full objective at the current parameters
};

// Parameters receive small generic offsets so no gradient entry sits on an
// init symmetry while the loss stays small enough for central differences
// to resolve every entry.
GradCheckFixture make_gradcheck_fixture(std::uint64_t seed);

}  // namespace blocklink
