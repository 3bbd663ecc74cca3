#include "blocklink/encoder.hpp"

#include <cmath>

namespace blocklink {

namespace {

std::string lname(int layer, const char* suffix) {
  return "enc.L" + std::to_string(layer) + "." + suffix;
}

void check_cfg(const EncoderConfig& cfg) {
  if (cfg.num_nodes <= 0) throw ContractError("encoder: num_nodes must be positive");
  if (cfg.layers <= 0) throw ContractError("encoder: layers must be positive");
  if (cfg.heads <= 0 || cfg.head_dim <= 0) throw ContractError("encoder: heads and head_dim must be positive");
  if (cfg.feat_dim < 0) throw ContractError("encoder: negative feature width");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw ContractError("encoder: dropout must lie in [0,1)");
}

}  // namespace

void fill_normal(Tensor& t, double stddev, SeededRng& rng) {
  for (double& x : t.vec()) x = stddev * rng.normal();
}

void encoder_init_params(ParamStore& params, const EncoderConfig& cfg, SeededRng& init_rng) {
  check_cfg(cfg);
  const int D = cfg.width();
  auto normal = [&](std::vector<int> shape) {
    Tensor t(std::move(shape), 0.0, true);
    fill_normal(t, 0.02, init_rng);
    return t;
  };
  if (cfg.feat_dim == 0) {
    params.add("enc.embed", normal({cfg.num_nodes, D}));
  } else {
    params.add("enc.in_proj", normal({cfg.feat_dim, D}));
  }
  for (int l = 0; l < cfg.layers; ++l) {
    params.add(lname(l, "wq"), normal({D, D}));
    params.add(lname(l, "wk"), normal({D, D}));
    params.add(lname(l, "wv"), normal({D, D}));
    params.add(lname(l, "type_emb"), normal({3, D}));
    params.add(lname(l, "ffn_w1"), normal({D, 4 * D}));
    params.add(lname(l, "ffn_b1"), Tensor({4 * D}, 0.0, true));
    params.add(lname(l, "ffn_w2"), normal({4 * D, D}));
    params.add(lname(l, "ffn_b2"), Tensor({D}, 0.0, true));
    params.add(lname(l, "bn1.gamma"), Tensor({D}, 1.0, true));
    params.add(lname(l, "bn1.beta"), Tensor({D}, 0.0, true));
    params.add(lname(l, "bn2.gamma"), Tensor({D}, 1.0, true));
    params.add(lname(l, "bn2.beta"), Tensor({D}, 0.0, true));
  }
}

EncoderState encoder_init_state(const EncoderConfig& cfg) {
  check_cfg(cfg);
  EncoderState s;
  s.bn_mean.assign(2 * cfg.layers, std::vector<double>(cfg.width(), 0.0));
  s.bn_var.assign(2 * cfg.layers, std::vector<double>(cfg.width(), 1.0));
  return s;
}

Tensor encoder_forward(ParamStore& params, const EncoderConfig& cfg, EncoderState& state,
                       const Tensor* features, const AttentionTopology& topo, bool training,
                       SeededRng* dropout_rng) {
  check_cfg(cfg);
  const int D = cfg.width();
  if (topo.num_nodes != cfg.num_nodes) throw ContractError("encoder: topology node count disagrees with config");
  if (!topo.full_coverage)
    throw ContractError("encoder: a node has no in-edges; enable self edges or fix the topology");
  if (static_cast<int>(state.bn_mean.size()) != 2 * cfg.layers)
    throw ContractError("encoder: state sized for a different layer count");

  Tensor x;
  if (cfg.feat_dim == 0) {
    x = params.at("enc.embed");
    if (x.shape()[0] != cfg.num_nodes) throw DimensionError("encoder: embedding table row count mismatch");
  } else {
    if (!features) throw ContractError("encoder: features required when feat_dim > 0");
    if (features->ndim() != 2 || features->shape()[0] != cfg.num_nodes || features->shape()[1] != cfg.feat_dim)
      throw DimensionError("encoder: feature matrix is " + features->shape_str() + ", expected [" +
                           std::to_string(cfg.num_nodes) + " x " + std::to_string(cfg.feat_dim) + "]");
    x = matmul(*features, params.at("enc.in_proj"));
  }

  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));
  for (int l = 0; l < cfg.layers; ++l) {
    Tensor q = matmul(x, params.at(lname(l, "wq")));
    Tensor k = matmul(x, params.at(lname(l, "wk")));
    Tensor v = matmul(x, params.at(lname(l, "wv")));
    Tensor qe = rows_gather(q, topo.dst);
    Tensor ke = rows_gather(k, topo.src);
    Tensor te = rows_gather(params.at(lname(l, "type_emb")), topo.type);
    Tensor scores = add(scale(rowwise_dot_heads(qe, ke, cfg.heads), inv_sqrt_dh),
                        rowwise_dot_heads(qe, te, cfg.heads));
    Tensor alpha = segment_softmax(scores, topo.dst);
    Tensor msg = segment_weighted_sum(alpha, v, topo.src, topo.dst, cfg.num_nodes);
    msg = dropout(msg, cfg.dropout, training, dropout_rng);
    x = batch_norm(add(x, msg), params.at(lname(l, "bn1.gamma")), params.at(lname(l, "bn1.beta")), training,
                   &state.bn_mean[2 * l], &state.bn_var[2 * l], cfg.bn_momentum, cfg.bn_eps);
    Tensor h = gelu(add(matmul(x, params.at(lname(l, "ffn_w1"))), params.at(lname(l, "ffn_b1"))));
    h = dropout(h, cfg.dropout, training, dropout_rng);
    Tensor f = add(matmul(h, params.at(lname(l, "ffn_w2"))), params.at(lname(l, "ffn_b2")));
    x = batch_norm(add(x, f), params.at(lname(l, "bn2.gamma")), params.at(lname(l, "bn2.beta")), training,
                   &state.bn_mean[2 * l + 1], &state.bn_var[2 * l + 1], cfg.bn_momentum, cfg.bn_eps);
  }
  return x;
}

}  // namespace blocklink
