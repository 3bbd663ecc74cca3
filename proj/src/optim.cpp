#include "blocklink/optim.hpp"

#include <cmath>

namespace blocklink {

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (params_.count(name)) throw KeyError("params: duplicate name '" + name + "'");
  if (!t.defined()) throw ContractError("params: undefined tensor for '" + name + "'");
  if (!t.requires_grad()) t = Tensor::from(t.shape(), t.vec(), true);
  auto [it, ok] = params_.emplace(name, std::move(t));
  (void)ok;
  m_[name].assign(it->second.size(), 0.0);
  v_[name].assign(it->second.size(), 0.0);
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw KeyError("params: unknown name '" + name + "'");
  return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw KeyError("params: unknown name '" + name + "'");
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& kv : params_) out.push_back(kv.first);
  return out;
}

void ParamStore::zero_grads() {
  for (auto& kv : params_) kv.second.zero_grad();
}

std::map<std::string, std::vector<double>> ParamStore::snapshot_values() const {
  std::map<std::string, std::vector<double>> out;
  for (const auto& kv : params_) out[kv.first] = kv.second.vec();
  return out;
}

void ParamStore::restore_values(const std::map<std::string, std::vector<double>>& values) {
  for (const auto& kv : values) {
    Tensor& t = at(kv.first);
    if (t.size() != kv.second.size()) throw DimensionError("params: snapshot size mismatch for '" + kv.first + "'");
    t.vec() = kv.second;
  }
}

GradientMap backward(const Tensor& loss, ParamStore& params) {
  params.zero_grads();
  backprop(loss);
  GradientMap out;
  for (const auto& name : params.names()) {
    const Tensor& p = params.at(name);
    out.emplace(name, Tensor::from(p.shape(), p.grad(), false));
  }
  return out;
}

double clip_global_norm(GradientMap& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ContractError("clip_global_norm: max_norm must be positive");
  long double sq = 0.0L;
  for (const auto& kv : grads)
    for (double g : kv.second.vec()) sq += static_cast<long double>(g) * g;
  const double norm = std::sqrt(static_cast<double>(sq));
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& kv : grads)
      for (double& g : kv.second.vec()) g *= s;
  }
  return norm;
}

void adam_step(ParamStore& params, const GradientMap& grads, double lr,
               std::pair<double, double> betas, double eps, double weight_decay) {
  if (!(lr > 0.0)) throw ContractError("adam: lr must be positive");
  const double b1 = betas.first, b2 = betas.second;
  if (!(b1 >= 0.0 && b1 < 1.0 && b2 >= 0.0 && b2 < 1.0)) throw ContractError("adam: betas must lie in [0,1)");
  for (const auto& name : params.names())
    if (!grads.count(name)) throw KeyError("adam: gradient map is missing '" + name + "'");

  params.step_ += 1;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(params.step_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(params.step_));
  for (auto& kv : params.params_) {
    const std::string& name = kv.first;
    Tensor& p = kv.second;
    const std::vector<double>& g = grads.at(name).vec();
    if (g.size() != p.size()) throw DimensionError("adam: gradient size mismatch for '" + name + "'");
    std::vector<double>& m = params.m_[name];
    std::vector<double>& v = params.v_[name];
    double* pp = p.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = g[i] + weight_decay * pp[i];
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      pp[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

double finite_difference_check(const std::function<Tensor(ParamStore&)>& loss_fn, ParamStore& params,
                               double step) {
  if (!(step > 0.0)) throw ContractError("finite_difference_check: step must be positive");
  Tensor loss = loss_fn(params);
  if (!std::isfinite(loss.value())) throw NumericError("finite_difference_check: loss is not finite");
  GradientMap analytic = backward(loss, params);

  double worst = 0.0;
  for (const auto& name : params.names()) {
    Tensor& p = params.at(name);
    const std::vector<double>& ga = analytic.at(name).vec();
    double* pp = p.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = pp[i];
      double fp, fm;
      {
        NoGradGuard ng;
        pp[i] = keep + step;
        fp = loss_fn(params).value();
        pp[i] = keep - step;
        fm = loss_fn(params).value();
        pp[i] = keep;
      }
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("finite_difference_check: perturbed loss is not finite");
      const double fd = (fp - fm) / (2.0 * step);
      const double abs_err = std::fabs(ga[i] - fd);
      // Central differences resolve nothing below ~ulp(loss)/step; entries
      // agreeing that tightly (e.g. gradients a mean-normalization makes
      // exactly zero) count as matches instead of dividing rounding crumbs.
      if (abs_err <= 1e-7) continue;
      const double denom = std::max({std::fabs(ga[i]), std::fabs(fd), 1e-8});
      worst = std::max(worst, abs_err / denom);
    }
  }
  return worst;
}

}  // namespace blocklink
