#include "blocklink/variational.hpp"

#include <cmath>

#include "blocklink/encoder.hpp"
#include "blocklink/special.hpp"

namespace blocklink {

namespace {

void check_cfg(const VariationalConfig& cfg) {
  if (cfg.K <= 0) throw ContractError("variational: K must be positive");
  if (!(cfg.tau > 0.0) || !(cfg.tau_prior > 0.0)) throw ContractError("variational: temperatures must be positive");
  if (!(cfg.prior_a > 0.0) || !(cfg.prior_b > 0.0)) throw ContractError("variational: prior shapes must be positive");
  if (cfg.taylor_terms < 1) throw ContractError("variational: taylor_terms must be at least 1");
}

}  // namespace

void variational_init_params(ParamStore& params, int width, const VariationalConfig& cfg, SeededRng& init_rng) {
  check_cfg(cfg);
  if (width <= 0) throw ContractError("variational: width must be positive");
  auto normal = [&](std::vector<int> shape, double std) {
    Tensor t(std::move(shape), 0.0, true);
    fill_normal(t, std, init_rng);
    return t;
  };
  // Fan-scaled logits and mean heads so nodes start distinguishable; the
  // log-std head stays near zero so sigma starts close to 1.
  double glorot = std::sqrt(2.0 / (width + cfg.K));
  params.add("var.w_pi", normal({width, cfg.K}, glorot));
  params.add("var.w_mu", normal({width, cfg.K}, glorot));
  params.add("var.w_sigma", normal({width, cfg.K}, 0.02));
  params.add("var.log_c", Tensor({cfg.K}, std::log(cfg.prior_a), true));
  params.add("var.log_d", Tensor({cfg.K}, std::log(cfg.prior_b), true));
}

HeadsOut heads_forward(ParamStore& params, const Tensor& h) {
  return HeadsOut{matmul(h, params.at("var.w_pi")), matmul(h, params.at("var.w_mu")),
                  matmul(h, params.at("var.w_sigma"))};
}

Tensor sample_sticks_with(ParamStore& params, const Tensor& u) {
  return kumaraswamy_sample(params.at("var.log_c"), params.at("var.log_d"), u);
}

Tensor sample_sticks(ParamStore& params, int K, SeededRng& noise_rng) {
  Tensor u({K}, 0.0, false);
  for (double& x : u.vec()) x = noise_rng.uniform_open01(1e-8);
  return sample_sticks_with(params, u);
}

Tensor sticks_to_pi(const Tensor& v) { return stick_breaking(v); }

Tensor posterior_logits(const Tensor& ell, const Tensor& pi) {
  if (ell.ndim() != 2 || pi.ndim() != 1 || ell.shape()[1] != pi.shape()[0])
    throw DimensionError("posterior_logits: ell " + ell.shape_str() + " does not broadcast with pi " +
                         pi.shape_str());
  return add(ell, logit(clamp(pi, 1e-7, 1.0 - 1e-7)));
}

Tensor sample_membership_with(const Tensor& lambda, double tau, const Tensor& g) {
  if (!(tau > 0.0)) throw ContractError("sample_membership: temperature must be positive");
  if (g.shape() != lambda.shape())
    throw DimensionError("sample_membership: noise shape " + g.shape_str() + " vs " + lambda.shape_str());
  return sigmoid(scale(add(lambda, g), 1.0 / tau));
}

Tensor sample_membership(const Tensor& lambda, double tau, SeededRng& noise_rng) {
  Tensor g(lambda.shape(), 0.0, false);
  for (double& x : g.vec()) x = noise_rng.logistic();
  return sample_membership_with(lambda, tau, g);
}

Tensor sample_strengths_with(const Tensor& mu, const Tensor& log_sigma, const Tensor& eps) {
  if (mu.shape() != log_sigma.shape() || mu.shape() != eps.shape())
    throw DimensionError("sample_strengths: shapes disagree");
  return add(mu, mul(exp(log_sigma), eps));
}

Tensor sample_strengths(const Tensor& mu, const Tensor& log_sigma, SeededRng& noise_rng) {
  Tensor eps(mu.shape(), 0.0, false);
  for (double& x : eps.vec()) x = noise_rng.normal();
  return sample_strengths_with(mu, log_sigma, eps);
}

LatentNoise draw_latent_noise(int num_nodes, int K, SeededRng& noise_rng) {
  if (num_nodes <= 0 || K <= 0) throw ContractError("latent noise: sizes must be positive");
  LatentNoise n;
  n.u = Tensor({K}, 0.0, false);
  for (double& x : n.u.vec()) x = noise_rng.uniform_open01(1e-8);
  n.g = Tensor({num_nodes, K}, 0.0, false);
  for (double& x : n.g.vec()) x = noise_rng.logistic();
  n.eps = Tensor({num_nodes, K}, 0.0, false);
  for (double& x : n.eps.vec()) x = noise_rng.normal();
  return n;
}

LatentSample sample_latents(ParamStore& params, const VariationalConfig& cfg, const Tensor& h,
                            const LatentNoise& noise, bool stick_prior) {
  check_cfg(cfg);
  LatentSample s;
  HeadsOut heads = heads_forward(params, h);
  s.ell = heads.ell;
  s.mu = heads.mu;
  s.log_sigma = heads.log_sigma;
  if (stick_prior) {
    s.v = sample_sticks_with(params, noise.u);
    s.pi = sticks_to_pi(s.v);
    s.lambda_post = posterior_logits(s.ell, s.pi);
  } else {
    s.pi = Tensor({cfg.K}, 0.5, false);
    s.lambda_post = s.ell;
  }
  if (noise.g.shape() != s.lambda_post.shape())
    throw DimensionError("sample_latents: noise shape " + noise.g.shape_str() + " vs " +
                         s.lambda_post.shape_str());
  // Keep the pre-squash logits: b saturates to exactly 0 or 1 in floating
  // point while y stays finite, and the membership KL needs the finite form.
  s.y = scale(add(s.lambda_post, noise.g), 1.0 / cfg.tau);
  s.b = sigmoid(s.y);
  s.r = sample_strengths_with(s.mu, s.log_sigma, noise.eps);
  s.z = mul(s.b, s.r);
  return s;
}

LatentSample expected_latents(ParamStore& params, const VariationalConfig& cfg, const Tensor& h,
                              bool stick_prior) {
  check_cfg(cfg);
  LatentSample s;
  HeadsOut heads = heads_forward(params, h);
  s.ell = heads.ell;
  s.mu = heads.mu;
  s.log_sigma = heads.log_sigma;
  if (stick_prior) {
    const std::vector<double>& lc = params.at("var.log_c").vec();
    const std::vector<double>& ld = params.at("var.log_d").vec();
    Tensor vbar({cfg.K}, 0.0, false);
    for (int k = 0; k < cfg.K; ++k)
      vbar.vec()[k] = kumaraswamy_mean(std::exp(lc[k]), std::exp(ld[k]));
    s.v = vbar;
    s.pi = sticks_to_pi(s.v);
    s.lambda_post = posterior_logits(s.ell, s.pi);
  } else {
    s.pi = Tensor({cfg.K}, 0.5, false);
    s.lambda_post = s.ell;
  }
  s.y = s.lambda_post;
  s.b = sigmoid(s.y);
  s.r = s.mu;
  s.z = mul(s.b, s.r);
  return s;
}

}  // namespace blocklink
