#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "blocklink/tensor.hpp"

namespace blocklink {

using GradientMap = std::map<std::string, Tensor>;

// Named learnable tensors plus Adam moment state. Iteration order is the
// sorted name order everywhere, so updates are reproducible.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  std::vector<std::string> names() const;
  std::size_t size() const { return params_.size(); }

  void zero_grads();
  long long step_count() const { return step_; }

  // Deep copies of parameter values, keyed by name (moments excluded).
  std::map<std::string, std::vector<double>> snapshot_values() const;
  void restore_values(const std::map<std::string, std::vector<double>>& values);

 private:
  friend void adam_step(ParamStore&, const GradientMap&, double, std::pair<double, double>, double, double);
  std::map<std::string, Tensor> params_;
  std::map<std::string, std::vector<double>> m_, v_;
  long long step_ = 0;
};

// Runs the tape from `loss` and returns one gradient tensor per parameter in
// `params`; parameters the loss never touched get zero gradients.
GradientMap backward(const Tensor& loss, ParamStore& params);

// Joint L2 norm over every entry of every gradient; scales all of them by
// max_norm / norm when the norm exceeds max_norm. Returns the pre-clip norm.
double clip_global_norm(GradientMap& grads, double max_norm);

// Adam with bias correction; weight decay folds into the gradient before the
// moment updates (classic coupled L2).
void adam_step(ParamStore& params, const GradientMap& grads, double lr,
               std::pair<double, double> betas = {0.9, 0.999}, double eps = 1e-8,
               double weight_decay = 0.0);

// Central differences against the tape gradient, entry by entry. Returns the
// max of |analytic - fd| / max(|analytic|, |fd|, 1e-8) over all entries,
// except that entries with |analytic - fd| <= 1e-7 count as exact agreement:
// that absolute band is the resolution limit of central differences at 64-bit
// precision, and structurally zero gradients live inside it.
double finite_difference_check(const std::function<Tensor(ParamStore&)>& loss_fn, ParamStore& params,
                               double step = 1e-5);

}  // namespace blocklink
