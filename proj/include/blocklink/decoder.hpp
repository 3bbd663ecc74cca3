#pragma once

#include <vector>

#include "blocklink/optim.hpp"
#include "blocklink/rng.hpp"
#include "blocklink/tensor.hpp"
#include "blocklink/variational.hpp"

namespace blocklink {

struct DecoderConfig {
  int K = 10;
  int d_hidden = 0;  // 0 resolves to 2K
  int d_mlp = 0;     // 0 resolves to K
  int feat_dim = 0;  // 0 disables the feature head
  DecoderConfig resolved() const;
};

// Parameter names: dec.w1 [K, d_hidden], dec.b1 [d_hidden],
// dec.w2 [d_hidden, d_mlp], dec.b2 [d_mlp]; with features also
// dec.feat_w [d_mlp, F], dec.feat_b [F].
void decoder_init_params(ParamStore& params, const DecoderConfig& cfg, SeededRng& init_rng);

// z_tilde = W2 ReLU(W1 z + b1) + b2, applied row by row.
Tensor decode(ParamStore& params, const Tensor& z);

// sigmoid(<za, zb>); symmetric in its arguments.
double edge_probability(const std::vector<double>& za, const std::vector<double>& zb);

// Mean over pairs of softplus(logit) - y * logit, the stable form of
// binary cross-entropy. Empty pair set returns 0 with a warning on stderr.
Tensor reconstruction_loss(const Tensor& z_tilde, const std::vector<int>& us, const std::vector<int>& vs,
                           const std::vector<double>& labels);

// Sum over entries of (mu^2 + sigma^2 - 1 - 2 log sigma) / 2.
Tensor kl_gaussian_std(const Tensor& mu, const Tensor& sigma);

// Closed-form Kumaraswamy(c,d) -> Beta(a,b) divergence with the Beta-function
// series truncated at taylor_terms, summed over the entries of c and d.
Tensor kl_kumaraswamy_beta(const Tensor& c, const Tensor& d, double a, double b, int taylor_terms = 10);

// Single-sample pathwise estimate: log q(b; lambda_post, tau_post) minus
// log p(b; logit(pi), tau_prior), summed over entries. b is clamped into
// (1e-6, 1 - 1e-6) before the densities are evaluated.
Tensor kl_binary_concrete(const Tensor& lambda_post, const Tensor& pi, double tau_post, double tau_prior,
                          const Tensor& b);

// Same estimate evaluated at the pre-squash logits y = logit(b). Equal to the
// b form in exact arithmetic (the squash Jacobian cancels between q and p) but
// needs no clamp, so it stays finite and correctly signed when b saturates to
// 0 or 1 in floating point. Use this form during training.
Tensor kl_binary_concrete_logits(const Tensor& lambda_post, const Tensor& pi, double tau_post,
                                 double tau_prior, const Tensor& y);

// Half the mean over nodes of the squared reconstruction distance
// |feat_dec(z_tilde_n) - x_n|^2.
Tensor feature_reconstruction_loss(ParamStore& params, const Tensor& z_tilde, const Tensor& features);

// Linear ramp: min(1, epoch / anneal_end), clamped below at 0.
double anneal_weight(int epoch, int anneal_end);

struct LossBreakdown {
  double recon = 0.0;
  double kl_sticks = 0.0;
  double kl_memberships = 0.0;
  double kl_strengths = 0.0;
  double feat_recon = 0.0;
  double anneal_weight = 0.0;
  double total = 0.0;
};

struct ElboTerms {
  bool sticks = true;
  bool memberships = true;
  bool strengths = true;
};

struct ElboLoss {
  Tensor total;  // differentiable training objective
  LossBreakdown parts;
};

// total = recon + feat_recon + anneal_w * (kl_sticks + kl_memberships +
// kl_strengths); disabled terms contribute exactly zero. The KL parts are
// reported per training pair (the entry sums divided by the pair count) so
// they live on the same scale as the mean-form reconstruction term; the
// full-graph bound is total times the pair count.
ElboLoss elbo_loss(ParamStore& params, const LatentSample& sample, const std::vector<int>& us,
                   const std::vector<int>& vs, const std::vector<double>& labels, const Tensor* features,
                   const VariationalConfig& vcfg, double anneal_w, const ElboTerms& terms = {});

}  // namespace blocklink
