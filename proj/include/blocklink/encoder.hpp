#pragma once

#include <string>
#include <vector>

#include "blocklink/optim.hpp"
#include "blocklink/rng.hpp"
#include "blocklink/tensor.hpp"
#include "blocklink/topology.hpp"

namespace blocklink {

struct EncoderConfig {
  int num_nodes = 0;
  int feat_dim = 0;  // 0 => learned per-node embedding table
  int layers = 3;
  int heads = 4;
  int head_dim = 32;
  double dropout = 0.0;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;

  int width() const { return heads * head_dim; }
};

// Running normalization statistics, two sublayers per layer.
struct EncoderState {
  std::vector<std::vector<double>> bn_mean, bn_var;
};

// Parameter names: enc.embed or enc.in_proj, then per layer L<i>:
// wq/wk/wv [D,D], type_emb [3,D], ffn_w1 [D,4D], ffn_b1 [4D],
// ffn_w2 [4D,D], ffn_b2 [D], bn1/bn2 gamma+beta [D].
void encoder_init_params(ParamStore& params, const EncoderConfig& cfg, SeededRng& init_rng);
EncoderState encoder_init_state(const EncoderConfig& cfg);

// Score for edge (u -> v): <Q(x_v), K(x_u)>/sqrt(d_h) + <Q(x_v), E_type>.
// Per-destination softmax, value aggregation, residual + node-dimension
// normalization, then a GELU feed-forward sublayer (post-norm). Dropout sits
// after the attention output and after the feed-forward activation.
Tensor encoder_forward(ParamStore& params, const EncoderConfig& cfg, EncoderState& state,
                       const Tensor* features, const AttentionTopology& topo, bool training,
                       SeededRng* dropout_rng);

// Fills a tensor with N(0, std) draws in row-major order.
void fill_normal(Tensor& t, double stddev, SeededRng& rng);

}  // namespace blocklink
