#pragma once

#include "blocklink/optim.hpp"
#include "blocklink/rng.hpp"
#include "blocklink/tensor.hpp"

namespace blocklink {

struct VariationalConfig {
  int K = 10;              // truncation level
  double tau = 1.0;        // posterior relaxation temperature
  double tau_prior = 0.5;  // prior relaxation temperature
  double prior_a = 10.0;   // Beta prior, first shape
  double prior_b = 0.1;    // Beta prior, second shape
  int taylor_terms = 10;   // series length in the stick KL
};

// Parameter names: var.w_pi, var.w_mu, var.w_sigma [D,K];
// var.log_c, var.log_d [K] (unconstrained logs, initialized at the prior).
void variational_init_params(ParamStore& params, int width, const VariationalConfig& cfg, SeededRng& init_rng);

struct HeadsOut {
  Tensor ell;        // membership logits, N x K
  Tensor mu;         // strength means, N x K
  Tensor log_sigma;  // strength log-stds, N x K
};

HeadsOut heads_forward(ParamStore& params, const Tensor& h);

// v_k = (1 - u_k^{1/d_k})^{1/c_k}, u drawn uniform and clamped into
// (1e-8, 1-1e-8). Differentiable in the unconstrained log parameters.
Tensor sample_sticks(ParamStore& params, int K, SeededRng& noise_rng);
Tensor sample_sticks_with(ParamStore& params, const Tensor& u);

// pi_k = v_k * prod_{i<k} (1 - v_i); boundary v values are clamped.
Tensor sticks_to_pi(const Tensor& v);

// lambda = ell + log(pi / (1 - pi)) with pi clamped into [1e-7, 1-1e-7].
Tensor posterior_logits(const Tensor& ell, const Tensor& pi);

// b = sigmoid((lambda + g) / tau), g = log u - log(1 - u).
Tensor sample_membership(const Tensor& lambda, double tau, SeededRng& noise_rng);
Tensor sample_membership_with(const Tensor& lambda, double tau, const Tensor& g);

// r = mu + exp(log_sigma) * eps, eps standard normal.
Tensor sample_strengths(const Tensor& mu, const Tensor& log_sigma, SeededRng& noise_rng);
Tensor sample_strengths_with(const Tensor& mu, const Tensor& log_sigma, const Tensor& eps);

struct LatentSample {
  Tensor v;            // sticks, K
  Tensor pi;           // prior inclusion probabilities, K
  Tensor ell;          // data logits, N x K
  Tensor lambda_post;  // posterior logits, N x K
  Tensor y;            // pre-squash membership logits, N x K; b = sigmoid(y)
  Tensor b;            // relaxed memberships, N x K
  Tensor mu, log_sigma;
  Tensor r;  // strengths, N x K
  Tensor z;  // b * r, N x K
};

// Fixed noise for one latent draw; reusable for frozen-noise checks.
struct LatentNoise {
  Tensor u;    // K
  Tensor g;    // N x K
  Tensor eps;  // N x K
};

LatentNoise draw_latent_noise(int num_nodes, int K, SeededRng& noise_rng);

// Full reparameterized latent draw from encoder output h (N x D).
// With stick_prior false the stick machinery is bypassed: lambda = ell and
// pi is fixed at 1/2.
LatentSample sample_latents(ParamStore& params, const VariationalConfig& cfg, const Tensor& h,
                            const LatentNoise& noise, bool stick_prior = true);

// Noise-free readout: sticks at their Kumaraswamy means, b = sigmoid(lambda),
// r = mu.
LatentSample expected_latents(ParamStore& params, const VariationalConfig& cfg, const Tensor& h,
                              bool stick_prior = true);

}  // namespace blocklink
