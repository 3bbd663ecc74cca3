#include "blocklink/decoder.hpp"

#include <cmath>
#include <iostream>

#include "blocklink/encoder.hpp"
#include "blocklink/errors.hpp"
#include "blocklink/special.hpp"

namespace blocklink {

DecoderConfig DecoderConfig::resolved() const {
  if (K <= 0) throw ContractError("decoder: K must be positive");
  DecoderConfig r = *this;
  if (r.d_hidden == 0) r.d_hidden = 2 * K;
  if (r.d_mlp == 0) r.d_mlp = K;
  if (r.d_hidden <= 0 || r.d_mlp <= 0) throw ContractError("decoder: widths must be positive");
  if (r.feat_dim < 0) throw ContractError("decoder: feat_dim must be non-negative");
  return r;
}

void decoder_init_params(ParamStore& params, const DecoderConfig& cfg_in, SeededRng& init_rng) {
  DecoderConfig cfg = cfg_in.resolved();
  // Fan-scaled init: the decoder feeds an inner product, so the pair logits
  // shrink with the square of the layer gain. A fixed small std leaves them
  // (and their gradients) orders of magnitude below the KL pull and training
  // stalls at the uniform predictor.
  auto glorot = [&](std::vector<int> shape) {
    Tensor t(shape, 0.0, true);
    fill_normal(t, std::sqrt(2.0 / (shape[0] + shape[1])), init_rng);
    return t;
  };
  params.add("dec.w1", glorot({cfg.K, cfg.d_hidden}));
  params.add("dec.b1", Tensor({cfg.d_hidden}, 0.0, true));
  params.add("dec.w2", glorot({cfg.d_hidden, cfg.d_mlp}));
  params.add("dec.b2", Tensor({cfg.d_mlp}, 0.0, true));
  if (cfg.feat_dim > 0) {
    params.add("dec.feat_w", glorot({cfg.d_mlp, cfg.feat_dim}));
    params.add("dec.feat_b", Tensor({cfg.feat_dim}, 0.0, true));
  }
}

Tensor decode(ParamStore& params, const Tensor& z) {
  Tensor h1 = relu(add(matmul(z, params.at("dec.w1")), params.at("dec.b1")));
  return add(matmul(h1, params.at("dec.w2")), params.at("dec.b2"));
}

double edge_probability(const std::vector<double>& za, const std::vector<double>& zb) {
  if (za.size() != zb.size()) throw DimensionError("edge_probability: width mismatch");
  double dot = 0.0;
  for (std::size_t i = 0; i < za.size(); ++i) dot += za[i] * zb[i];
  return sigmoid(dot);
}

Tensor reconstruction_loss(const Tensor& z_tilde, const std::vector<int>& us, const std::vector<int>& vs,
                           const std::vector<double>& labels) {
  if (us.size() != vs.size() || us.size() != labels.size())
    throw DimensionError("reconstruction_loss: pair and label counts disagree");
  if (us.empty()) {
    std::cerr << "warning: reconstruction_loss on an empty pair set, returning 0\n";
    return Tensor::scalar(0.0);
  }
  Tensor logits = pairs_dot(z_tilde, us, vs);
  Tensor y = Tensor::from({static_cast<int>(labels.size())}, labels);
  return mean(sub(softplus(logits), mul(y, logits)));
}

Tensor kl_gaussian_std(const Tensor& mu, const Tensor& sigma) {
  if (mu.shape() != sigma.shape()) throw DimensionError("kl_gaussian_std: shape mismatch");
  Tensor log_sigma = log(sigma);  // log throws on sigma <= 0
  Tensor inner = sub(add(mul(mu, mu), mul(sigma, sigma)), add_const(scale(log_sigma, 2.0), 1.0));
  return scale(sum(inner), 0.5);
}

Tensor kl_kumaraswamy_beta(const Tensor& c, const Tensor& d, double a, double b, int taylor_terms) {
  if (c.shape() != d.shape()) throw DimensionError("kl_kumaraswamy_beta: shape mismatch");
  if (!(a > 0.0) || !(b > 0.0)) throw ContractError("kl_kumaraswamy_beta: Beta shapes must be positive");
  if (taylor_terms < 1) throw ContractError("kl_kumaraswamy_beta: taylor_terms must be at least 1");
  for (double x : c.vec())
    if (!(x > 0.0)) throw ContractError("kl_kumaraswamy_beta: c must be positive");
  for (double x : d.vec())
    if (!(x > 0.0)) throw ContractError("kl_kumaraswamy_beta: d must be positive");

  // (c - a)/c * (-euler_gamma - digamma(d) - 1/d)
  Tensor inv_d = rcp(d);
  Tensor term1 = mul(div(add_const(c, -a), c), neg(add(add_const(digamma(d), kEulerGamma), inv_d)));
  // log(c d) + log B(a,b) - (d - 1)/d
  Tensor term234 = add(add(log(c), log(d)), add_const(inv_d, log_beta(a, b) - 1.0));
  // (b - 1) d * sum_m B(m/c, d) / (m + c d)
  Tensor inv_c = rcp(c);
  Tensor lgd = lgamma(d);
  Tensor cd = mul(c, d);
  Tensor series = Tensor(c.shape(), 0.0, false);
  for (int m = 1; m <= taylor_terms; ++m) {
    Tensor mc = scale(inv_c, static_cast<double>(m));
    Tensor log_bt = sub(add(lgamma(mc), lgd), lgamma(add(mc, d)));
    series = add(series, div(exp(log_bt), add_const(cd, static_cast<double>(m))));
  }
  Tensor term5 = scale(mul(d, series), b - 1.0);
  return sum(add(add(term1, term234), term5));
}

namespace {

// log q - log p of a relaxed Bernoulli pair evaluated at the shared pre-squash
// logits y. The squash Jacobian cancels between the two densities, leaving
// log(tau_q/tau_p) + (l_p - l_q) + 2(softplus(-l_p) - softplus(-l_q))
// with l_q = tau_q y - lambda_post and l_p = tau_p y - lambda_prior.
Tensor concrete_log_ratio(const Tensor& lambda_post, const Tensor& lambda_prior, double tau_post,
                          double tau_prior, const Tensor& y) {
  Tensor l_q = sub(scale(y, tau_post), lambda_post);
  Tensor l_p = sub(scale(y, tau_prior), lambda_prior);
  return add_const(add(sub(l_p, l_q), scale(sub(softplus(neg(l_p)), softplus(neg(l_q))), 2.0)),
                   std::log(tau_post / tau_prior));
}

}  // namespace

Tensor kl_binary_concrete(const Tensor& lambda_post, const Tensor& pi, double tau_post, double tau_prior,
                          const Tensor& b) {
  if (!(tau_post > 0.0) || !(tau_prior > 0.0))
    throw ContractError("kl_binary_concrete: temperatures must be positive");
  if (b.shape() != lambda_post.shape())
    throw DimensionError("kl_binary_concrete: sample shape " + b.shape_str() + " vs logits " +
                         lambda_post.shape_str());
  Tensor y = logit(clamp(b, 1e-6, 1.0 - 1e-6));
  Tensor lambda_prior = logit(clamp(pi, 1e-7, 1.0 - 1e-7));
  return sum(concrete_log_ratio(lambda_post, lambda_prior, tau_post, tau_prior, y));
}

Tensor kl_binary_concrete_logits(const Tensor& lambda_post, const Tensor& pi, double tau_post,
                                 double tau_prior, const Tensor& y) {
  if (!(tau_post > 0.0) || !(tau_prior > 0.0))
    throw ContractError("kl_binary_concrete_logits: temperatures must be positive");
  if (y.shape() != lambda_post.shape())
    throw DimensionError("kl_binary_concrete_logits: logits shape " + y.shape_str() + " vs " +
                         lambda_post.shape_str());
  // No clamp here: y stays finite even where sigmoid(y) rounds to 0 or 1, so
  // the densities keep their true tails instead of the clamp's flat ones.
  Tensor lambda_prior = logit(clamp(pi, 1e-7, 1.0 - 1e-7));
  return sum(concrete_log_ratio(lambda_post, lambda_prior, tau_post, tau_prior, y));
}

Tensor feature_reconstruction_loss(ParamStore& params, const Tensor& z_tilde, const Tensor& features) {
  if (!params.contains("dec.feat_w"))
    throw ContractError("feature_reconstruction_loss: decoder has no feature head");
  const Tensor& w = params.at("dec.feat_w");
  if (features.ndim() != 2 || features.shape()[1] != w.shape()[1])
    throw DimensionError("feature_reconstruction_loss: feature width " + features.shape_str() +
                         " vs head " + w.shape_str());
  if (features.shape()[0] != z_tilde.shape()[0])
    throw DimensionError("feature_reconstruction_loss: row counts disagree");
  Tensor pred = add(matmul(z_tilde, w), params.at("dec.feat_b"));
  Tensor diff = sub(pred, features);
  int n = features.shape()[0];
  return scale(sum(mul(diff, diff)), 0.5 / static_cast<double>(n));
}

double anneal_weight(int epoch, int anneal_end) {
  if (anneal_end <= 0) throw ContractError("anneal_weight: anneal_end must be positive");
  double w = static_cast<double>(epoch) / static_cast<double>(anneal_end);
  if (w < 0.0) return 0.0;
  return w > 1.0 ? 1.0 : w;
}

ElboLoss elbo_loss(ParamStore& params, const LatentSample& sample, const std::vector<int>& us,
                   const std::vector<int>& vs, const std::vector<double>& labels, const Tensor* features,
                   const VariationalConfig& vcfg, double anneal_w, const ElboTerms& terms) {
  Tensor z_tilde = decode(params, sample.z);
  Tensor recon = reconstruction_loss(z_tilde, us, vs, labels);
  Tensor feat = features != nullptr ? feature_reconstruction_loss(params, z_tilde, *features)
                                    : Tensor::scalar(0.0);
  // The reconstruction term is a mean over the pair batch, so the KL terms
  // enter divided by the pair count: the objective is the full bound scaled
  // by a constant, which leaves the optimum unchanged but keeps the two sides
  // at comparable magnitude instead of letting the entry-summed KLs dominate.
  double inv_pairs = 1.0 / static_cast<double>(us.empty() ? 1 : us.size());
  Tensor ks = Tensor::scalar(0.0);
  if (terms.sticks) {
    Tensor c = exp(params.at("var.log_c"));
    Tensor d = exp(params.at("var.log_d"));
    ks = scale(kl_kumaraswamy_beta(c, d, vcfg.prior_a, vcfg.prior_b, vcfg.taylor_terms), inv_pairs);
  }
  Tensor km = terms.memberships
                  ? scale(kl_binary_concrete_logits(sample.lambda_post, sample.pi, vcfg.tau,
                                                    vcfg.tau_prior, sample.y),
                          inv_pairs)
                  : Tensor::scalar(0.0);
  Tensor kr = terms.strengths ? scale(kl_gaussian_std(sample.mu, exp(sample.log_sigma)), inv_pairs)
                              : Tensor::scalar(0.0);

  ElboLoss out;
  out.total = add(add(recon, feat), scale(add(add(ks, km), kr), anneal_w));
  out.parts.recon = recon.value();
  out.parts.feat_recon = feat.value();
  out.parts.kl_sticks = ks.value();
  out.parts.kl_memberships = km.value();
  out.parts.kl_strengths = kr.value();
  out.parts.anneal_weight = anneal_w;
  out.parts.total = out.total.value();
  return out;
}

}  // namespace blocklink
