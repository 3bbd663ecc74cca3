#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "blocklink/errors.hpp"
#include "blocklink/rng.hpp"

namespace blocklink {

struct Node;

// Dense row-major tensor of 64-bit floats with an optional reverse-mode tape.
// Copies share storage; gradients accumulate into a buffer allocated at
// construction whenever requires_grad is set, so parent copies held by tape
// nodes see the same gradient memory.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return data_ != nullptr; }
  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  int rows() const;
  int cols() const;
  std::string shape_str() const;

  double value() const;  // single-element tensors only
  double* data() { return data_->data(); }
  const double* data() const { return data_->data(); }
  std::vector<double>& vec() { return *data_; }
  const std::vector<double>& vec() const { return *data_; }

  bool requires_grad() const { return requires_grad_; }
  const std::vector<double>& grad() const;
  void zero_grad();

  std::shared_ptr<std::vector<double>> data_ptr() const { return data_; }
  std::shared_ptr<std::vector<double>> grad_ptr() const { return grad_; }
  std::shared_ptr<Node> node() const { return node_; }
  void set_node(std::shared_ptr<Node> n) { node_ = std::move(n); }

 private:
  std::vector<int> shape_;
  std::shared_ptr<std::vector<double>> data_;
  std::shared_ptr<std::vector<double>> grad_;
  bool requires_grad_ = false;
  std::shared_ptr<Node> node_;
};

struct Node {
  std::vector<Tensor> parents;
  std::function<void(Node&)> backward;
};

bool grad_enabled();

// Detaches everything built in its scope from the tape.
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Seeds d(loss) = 1 and runs the tape in reverse topological order.
// Iteration order is fixed, so repeated runs are bit-identical.
void backprop(const Tensor& loss);

// ---- elementwise and linear algebra ----
// Binary ops accept equal shapes, a scalar on either side, or a trailing-dim
// row vector ([M] or [1,M]) on the right against a [N,M] left operand.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor rcp(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor logit(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor lgamma(const Tensor& a);
Tensor digamma(const Tensor& a);
// Gradient passes through unclamped entries and is zero on clamped ones.
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// ---- gather / segment ops ----
Tensor rows_gather(const Tensor& x, const std::vector<int>& ids);
// Per-row dot products within each of `heads` contiguous column blocks.
Tensor rowwise_dot_heads(const Tensor& a, const Tensor& b, int heads);
// Softmax over rows sharing a segment id, independently per column.
// Segments need not be contiguous; empty segments produce no outputs.
Tensor segment_softmax(const Tensor& scores, const std::vector<int>& segment_of);
std::vector<double> segment_softmax(const std::vector<double>& scores, const std::vector<int>& segment_of);
// out[dst[e], h*dh+j] += alpha[e,h] * values[src[e], h*dh+j]
Tensor segment_weighted_sum(const Tensor& alpha, const Tensor& values, const std::vector<int>& src,
                            const std::vector<int>& dst, int num_nodes);
// out[p] = <z[us[p],:], z[vs[p],:]>
Tensor pairs_dot(const Tensor& z, const std::vector<int>& us, const std::vector<int>& vs);

// ---- structured ops ----
// Normalization over the node (row) dimension. Train mode uses batch
// statistics and folds them into the running buffers; eval mode reads the
// running buffers.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, bool training,
                  std::vector<double>* running_mean, std::vector<double>* running_var,
                  double momentum = 0.1, double eps = 1e-5);
Tensor dropout(const Tensor& x, double p, bool training, SeededRng* rng);
// pi_k = v_k * prod_{i<k} (1 - v_i), v clamped into [1e-7, 1-1e-7].
Tensor stick_breaking(const Tensor& v);
// v = (1 - u^{1/d})^{1/c} with c = exp(log_c), d = exp(log_d); u is fixed
// noise in (0,1). Stable via log1mexp; differentiable in log_c and log_d.
Tensor kumaraswamy_sample(const Tensor& log_c, const Tensor& log_d, const Tensor& u);

}  // namespace blocklink
