#include "blocklink/fixture.hpp"

#include "blocklink/decoder.hpp"
#include "blocklink/encoder.hpp"

namespace blocklink {

Tensor GradCheckFixture::loss() {
  Tensor h = model.encode(&features, topo, /*training=*/true, nullptr);
  LatentSample s = model.sample(h, noise);
  return model.loss(s, us, vs, labels, &features, anneal_w).total;
}

GradCheckFixture make_gradcheck_fixture(std::uint64_t seed) {
  GradCheckFixture fx;
  const int n = 12;

  ModelConfig mc;
  mc.num_nodes = n;
  mc.feat_dim = 5;
  mc.layers = 2;
  mc.heads = 2;
  mc.hidden = 8;
  mc.dropout = 0.0;
  mc.K = 3;
  mc.d_exp = 2;
  // A gentle stick prior keeps every objective term O(1): the default
  // Beta(10, 0.1) saturates the membership logits, and the resulting large
  // cancelling sums raise the finite-difference noise floor above the
  // smallest attention-weight gradients.
  mc.prior_a = 2.0;
  mc.prior_b = 1.0;
  mc.validate();

  SeededRng root(seed);
  SeededRng topo_rng = root.substream(Stream::topology);
  SeededRng init_rng = root.substream(Stream::init);
  SeededRng noise_rng = root.substream(Stream::noise);
  SeededRng data_rng = root.substream(Stream::generate);

  EdgeList edges;
  for (int i = 0; i < n; ++i) edges.push_back({i, (i + 1) % n});
  edges.push_back({0, 6});
  edges.push_back({3, 9});
  fx.graph = make_graph(n, edges);

  fx.topo = build_topology(fx.graph.edges, n, mc.topology(), &topo_rng);

  fx.features = Tensor({n, mc.feat_dim});
  fill_normal(fx.features, 1.0, data_rng);

  fx.model = Model::init(mc, init_rng);
  // Generic offsets break init symmetry; kept small so the objective stays
  // O(10) and the finite-difference noise floor stays far below every
  // resolvable gradient entry.
  for (const auto& name : fx.model.params.names()) {
    Tensor& t = fx.model.params.at(name);
    for (double& x : t.vec()) x += 0.03 * data_rng.normal();
  }

  fx.noise = draw_latent_noise(n, mc.K, noise_rng);

  AdjacencyIndex idx(fx.graph);
  for (const auto& e : fx.graph.edges) {
    fx.us.push_back(e.first);
    fx.vs.push_back(e.second);
    fx.labels.push_back(1.0);
  }
  EdgeList negs = sample_negatives_uniform(idx, static_cast<int>(fx.graph.edges.size()), data_rng);
  for (const auto& e : negs) {
    fx.us.push_back(e.first);
    fx.vs.push_back(e.second);
    fx.labels.push_back(0.0);
  }
  fx.anneal_w = 1.0;
  return fx;
}

}  // namespace blocklink
