#pragma once

#include <string>
#include <vector>

#include "blocklink/decoder.hpp"
#include "blocklink/encoder.hpp"
#include "blocklink/optim.hpp"
#include "blocklink/rng.hpp"
#include "blocklink/tensor.hpp"
#include "blocklink/topology.hpp"
#include "blocklink/variational.hpp"

namespace blocklink {

struct ModelConfig {
  int num_nodes = 0;
  int feat_dim = 0;  // 0 => learned per-node embeddings
  int layers = 3;
  int heads = 4;
  int hidden = 128;  // encoder width D; head_dim = hidden / heads
  double dropout = 0.0;
  int K = 10;
  double tau = 1.0;
  double tau_prior = 0.5;
  double prior_a = 10.0;
  double prior_b = 0.1;
  int taylor_terms = 10;
  int dec_hidden = 0;  // 0 resolves to 2K
  int dec_mlp = 0;     // 0 resolves to K
  int d_exp = 8;
  bool self_loops = true;
  bool no_expander = false;
  bool no_local = false;
  bool no_stick_prior = false;
  bool no_kl_memberships = false;
  bool no_kl_strengths = false;

  EncoderConfig encoder() const;
  VariationalConfig variational() const;
  DecoderConfig decoder() const;
  TopologyConfig topology() const;
  ElboTerms elbo_terms() const;
  void validate() const;
};

// Encoder + variational posterior + decoder with one shared parameter store.
struct Model {
  ModelConfig cfg;
  ParamStore params;
  EncoderState state;

  static Model init(const ModelConfig& cfg, SeededRng& init_rng);

  Tensor encode(const Tensor* features, const AttentionTopology& topo, bool training,
                SeededRng* dropout_rng);
  LatentSample sample(const Tensor& h, const LatentNoise& noise);
  LatentSample expected(const Tensor& h);
  ElboLoss loss(const LatentSample& s, const std::vector<int>& us, const std::vector<int>& vs,
                const std::vector<double>& labels, const Tensor* features, double anneal_w);

  // Deterministic readout: eval-mode encoding, expected latents, decoded
  // inner-product probabilities. Repeated calls give identical scores.
  std::vector<double> score_pairs(const Tensor* features, const AttentionTopology& topo,
                                  const std::vector<int>& us, const std::vector<int>& vs);
  // One reparameterized latent draw instead of the expected readout.
  std::vector<double> score_pairs_sampled(const Tensor* features, const AttentionTopology& topo,
                                          const std::vector<int>& us, const std::vector<int>& vs,
                                          SeededRng& noise_rng);
};

struct Checkpoint {
  ModelConfig cfg;
  Model model;
  AttentionTopology topo;
};

// Plain-text container: version line, meta key/value lines, named parameter
// tensors with shape headers, normalization buffers, then the attention
// topology edge list. Values are written with 17 significant digits and
// round-trip exactly.
void save_checkpoint(const std::string& path, const Model& model, const AttentionTopology& topo);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace blocklink
