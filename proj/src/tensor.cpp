#include "blocklink/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <unordered_set>
#include <utility>

#include "blocklink/special.hpp"

namespace blocklink {

namespace {

thread_local bool g_grad_enabled = true;

std::size_t shape_numel(const std::vector<int>& shape) {
  if (shape.empty()) throw ContractError("tensor: empty shape");
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ContractError("tensor: negative dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

void attach(Tensor& out, std::vector<Tensor> parents, std::function<void(Node&)> fn) {
  if (!out.requires_grad()) return;
  auto n = std::make_shared<Node>();
  n->parents = std::move(parents);
  n->backward = std::move(fn);
  out.set_node(std::move(n));
}

bool want_grad(const Tensor& a) { return g_grad_enabled && a.requires_grad(); }
bool want_grad(const Tensor& a, const Tensor& b) {
  return g_grad_enabled && (a.requires_grad() || b.requires_grad());
}

void check_defined(const char* op, const Tensor& a) {
  if (!a.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

}  // namespace

Tensor::Tensor(std::vector<int> shape, double fill, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  shape_ = std::move(shape);
  data_ = std::make_shared<std::vector<double>>(n, fill);
  requires_grad_ = requires_grad;
  if (requires_grad_) grad_ = std::make_shared<std::vector<double>>(n, 0.0);
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size())
    throw DimensionError("tensor: value count does not match shape");
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<std::vector<double>>(std::move(values));
  t.requires_grad_ = requires_grad;
  if (requires_grad) t.grad_ = std::make_shared<std::vector<double>>(t.data_->size(), 0.0);
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from({1}, {v}, requires_grad);
}

int Tensor::rows() const {
  if (ndim() == 2) return shape_[0];
  if (ndim() == 1) return 1;
  throw ContractError("tensor: rows() on rank>" + std::to_string(ndim()));
}

int Tensor::cols() const {
  if (ndim() == 2) return shape_[1];
  if (ndim() == 1) return shape_[0];
  throw ContractError("tensor: cols() on rank " + std::to_string(ndim()));
}

std::string Tensor::shape_str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += " x ";
    s += std::to_string(shape_[i]);
  }
  return s + "]";
}

double Tensor::value() const {
  if (size() != 1) throw ContractError("tensor: value() on non-scalar " + shape_str());
  return (*data_)[0];
}

const std::vector<double>& Tensor::grad() const {
  if (!grad_) throw ContractError("tensor: no gradient buffer");
  return *grad_;
}

void Tensor::zero_grad() {
  if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

void backprop(const Tensor& loss) {
  check_defined("backward", loss);
  if (loss.size() != 1) throw ContractError("backward: loss must be scalar, got " + loss.shape_str());
  if (!loss.requires_grad()) return;
  (*loss.grad_ptr())[0] = 1.0;
  if (!loss.node()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& top = stack.back();
    Node* n = top.first;
    if (top.second < n->parents.size()) {
      Node* p = n->parents[top.second].node().get();
      ++top.second;
      if (p && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) (*it)->backward(**it);
}

// ---- elementwise helpers ----

namespace {

// rhs broadcast modes against the lhs shape
enum class BMode { same, rscalar, rrow, lscalar };

BMode classify(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return BMode::same;
  if (b.size() == 1) return BMode::rscalar;
  if (a.size() == 1) return BMode::lscalar;
  if (a.ndim() == 2) {
    int m = a.shape()[1];
    if ((b.ndim() == 1 && b.shape()[0] == m) || (b.ndim() == 2 && b.shape()[0] == 1 && b.shape()[1] == m))
      return BMode::rrow;
  }
  throw DimensionError(std::string(op) + ": shapes do not combine: " + a.shape_str() + " vs " + b.shape_str());
}

// f(x, y) -> z; dfa/dfb give dz/dx and dz/dy at (x, y, z).
template <class F, class DFA, class DFB>
Tensor ew_binary(const char* op, const Tensor& a, const Tensor& b, F f, DFA dfa, DFB dfb) {
  check_defined(op, a);
  check_defined(op, b);
  BMode mode = classify(op, a, b);
  const bool lhs_small = (mode == BMode::lscalar);
  const Tensor& big = lhs_small ? b : a;
  Tensor out(big.shape(), 0.0, want_grad(a, b));
  const std::size_t n = out.size();
  const int m = (mode == BMode::rrow) ? big.shape()[1] : 1;
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    double x = lhs_small ? pa[0] : pa[i];
    double y = (mode == BMode::same) ? pb[i]
             : (mode == BMode::rscalar) ? pb[0]
             : (mode == BMode::rrow) ? pb[i % m]
             : pb[i];
    po[i] = f(x, y);
  }
  auto od = out.data_ptr();
  auto og = out.grad_ptr();
  attach(out, {a, b}, [od, og, mode, m, n, f, dfa, dfb](Node& nd) {
    const Tensor& A = nd.parents[0];
    const Tensor& B = nd.parents[1];
    const double* pa = A.data();
    const double* pb = B.data();
    const double* g = og->data();
    const double* z = od->data();
    const bool lhs_small = (mode == BMode::lscalar);
    double* ga = A.requires_grad() ? A.grad_ptr()->data() : nullptr;
    double* gb = B.requires_grad() ? B.grad_ptr()->data() : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t ia = lhs_small ? 0 : i;
      std::size_t ib = (mode == BMode::same) ? i
                     : (mode == BMode::rscalar) ? 0
                     : (mode == BMode::rrow) ? (i % m)
                     : i;
      double x = pa[ia];
      double y = pb[ib];
      if (ga) ga[ia] += dfa(x, y, z[i]) * g[i];
      if (gb) gb[ib] += dfb(x, y, z[i]) * g[i];
    }
  });
  return out;
}

template <class F, class DF>
Tensor ew_unary(const char* op, const Tensor& a, F f, DF df) {
  check_defined(op, a);
  Tensor out(a.shape(), 0.0, want_grad(a));
  const std::size_t n = out.size();
  const double* pa = a.data();
  double* po = out.data();
  for (std::size_t i = 0; i < n; ++i) po[i] = f(pa[i]);
  auto od = out.data_ptr();
  auto og = out.grad_ptr();
  attach(out, {a}, [od, og, n, df](Node& nd) {
    const Tensor& A = nd.parents[0];
    if (!A.requires_grad()) return;
    const double* pa = A.data();
    const double* g = og->data();
    const double* z = od->data();
    double* ga = A.grad_ptr()->data();
    for (std::size_t i = 0; i < n; ++i) ga[i] += df(pa[i], z[i]) * g[i];
  });
  return out;
}

}  // namespace

// ---- linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined("matmul", a);
  check_defined("matmul", b);
  if (a.ndim() != 2 || b.ndim() != 2)
    throw DimensionError("matmul: requires rank-2 operands: " + a.shape_str() + " vs " + b.shape_str());
  if (a.shape()[1] != b.shape()[0])
    throw DimensionError("matmul: inner dimensions disagree: " + a.shape_str() + " vs " + b.shape_str());
  const int M = a.shape()[0], K = a.shape()[1], N = b.shape()[1];
  Tensor out({M, N}, 0.0, want_grad(a, b));
  {
    const double* A = a.data();
    const double* B = b.data();
    double* C = out.data();
    for (int i = 0; i < M; ++i) {
      const double* Ai = A + static_cast<std::size_t>(i) * K;
      double* Ci = C + static_cast<std::size_t>(i) * N;
      for (int k = 0; k < K; ++k) {
        const double aik = Ai[k];
        if (aik == 0.0) continue;
        const double* Bk = B + static_cast<std::size_t>(k) * N;
        for (int j = 0; j < N; ++j) Ci[j] += aik * Bk[j];
      }
    }
  }
  auto og = out.grad_ptr();
  attach(out, {a, b}, [og, M, K, N](Node& nd) {
    const Tensor& A = nd.parents[0];
    const Tensor& B = nd.parents[1];
    const double* g = og->data();
    if (A.requires_grad()) {
      double* ga = A.grad_ptr()->data();
      const double* pb = B.data();
      for (int i = 0; i < M; ++i) {
        const double* gi = g + static_cast<std::size_t>(i) * N;
        double* gai = ga + static_cast<std::size_t>(i) * K;
        for (int k = 0; k < K; ++k) {
          const double* bk = pb + static_cast<std::size_t>(k) * N;
          double s = 0.0;
          for (int j = 0; j < N; ++j) s += gi[j] * bk[j];
          gai[k] += s;
        }
      }
    }
    if (B.requires_grad()) {
      double* gb = B.grad_ptr()->data();
      const double* pa = A.data();
      for (int i = 0; i < M; ++i) {
        const double* gi = g + static_cast<std::size_t>(i) * N;
        const double* ai = pa + static_cast<std::size_t>(i) * K;
        for (int k = 0; k < K; ++k) {
          const double aik = ai[k];
          if (aik == 0.0) continue;
          double* gbk = gb + static_cast<std::size_t>(k) * N;
          for (int j = 0; j < N; ++j) gbk[j] += aik * gi[j];
        }
      }
    }
  });
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return ew_binary("add", a, b, [](double x, double y) { return x + y; },
                   [](double, double, double) { return 1.0; },
                   [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return ew_binary("sub", a, b, [](double x, double y) { return x - y; },
                   [](double, double, double) { return 1.0; },
                   [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return ew_binary("mul", a, b, [](double x, double y) { return x * y; },
                   [](double, double y, double) { return y; },
                   [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return ew_binary("div", a, b, [](double x, double y) { return x / y; },
                   [](double, double y, double) { return 1.0 / y; },
                   [](double, double y, double z) { return -z / y; });
}

Tensor neg(const Tensor& a) {
  return ew_unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double c) {
  return ew_unary("scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor add_const(const Tensor& a, double c) {
  return ew_unary("add_const", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& a) {
  return ew_unary("exp", a, [](double x) { return std::exp(x); }, [](double, double z) { return z; });
}

Tensor log(const Tensor& a) {
  for (double x : a.vec())
    if (!(x > 0.0)) throw NumericError("log: non-positive input");
  return ew_unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  for (double x : a.vec())
    if (x < 0.0) throw NumericError("sqrt: negative input");
  return ew_unary("sqrt", a, [](double x) { return std::sqrt(x); },
                  [](double, double z) { return 0.5 / z; });
}

Tensor rcp(const Tensor& a) {
  return ew_unary("rcp", a, [](double x) { return 1.0 / x; },
                  [](double, double z) { return -z * z; });
}

Tensor sigmoid(const Tensor& a) {
  return ew_unary("sigmoid", a, [](double x) { return blocklink::sigmoid(x); },
                  [](double, double z) { return z * (1.0 - z); });
}

Tensor softplus(const Tensor& a) {
  return ew_unary("softplus", a, [](double x) { return blocklink::softplus(x); },
                  [](double x, double) { return blocklink::sigmoid(x); });
}

Tensor logit(const Tensor& a) {
  for (double x : a.vec())
    if (!(x > 0.0 && x < 1.0)) throw ContractError("logit: input outside (0,1)");
  return ew_unary("logit", a, [](double x) { return blocklink::logit(x); },
                  [](double x, double) { return 1.0 / (x * (1.0 - x)); });
}

Tensor relu(const Tensor& a) {
  return ew_unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  // exact form x * Phi(x)
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  return ew_unary("gelu", a,
                  [=](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
                  [=](double x, double) {
                    double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
                    return cdf + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
                  });
}

Tensor lgamma(const Tensor& a) {
  for (double x : a.vec())
    if (!(x > 0.0)) throw ContractError("lgamma: requires positive input");
  return ew_unary("lgamma", a, [](double x) { return std::lgamma(x); },
                  [](double x, double) { return blocklink::digamma(x); });
}

Tensor digamma(const Tensor& a) {
  for (double x : a.vec())
    if (!(x > 0.0)) throw ContractError("digamma: requires positive input");
  return ew_unary("digamma", a, [](double x) { return blocklink::digamma(x); },
                  [](double x, double) { return blocklink::trigamma(x); });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw ContractError("clamp: lo > hi");
  return ew_unary("clamp", a,
                  [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
                  [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
  check_defined("sum", a);
  long double acc = 0.0L;
  for (double x : a.vec()) acc += x;
  Tensor out = Tensor::scalar(static_cast<double>(acc), want_grad(a));
  auto og = out.grad_ptr();
  attach(out, {a}, [og](Node& nd) {
    const Tensor& A = nd.parents[0];
    if (!A.requires_grad()) return;
    double g = (*og)[0];
    for (double& v : *A.grad_ptr()) v += g;
  });
  return out;
}

Tensor mean(const Tensor& a) {
  check_defined("mean", a);
  if (a.size() == 0) throw ContractError("mean: empty tensor");
  long double acc = 0.0L;
  for (double x : a.vec()) acc += x;
  const double inv = 1.0 / static_cast<double>(a.size());
  Tensor out = Tensor::scalar(static_cast<double>(acc) * inv, want_grad(a));
  auto og = out.grad_ptr();
  attach(out, {a}, [og, inv](Node& nd) {
    const Tensor& A = nd.parents[0];
    if (!A.requires_grad()) return;
    double g = (*og)[0] * inv;
    for (double& v : *A.grad_ptr()) v += g;
  });
  return out;
}

// ---- gather / segment ops ----

Tensor rows_gather(const Tensor& x, const std::vector<int>& ids) {
  check_defined("rows_gather", x);
  if (x.ndim() != 2) throw DimensionError("rows_gather: requires rank-2 input, got " + x.shape_str());
  const int N = x.shape()[0], D = x.shape()[1];
  for (int id : ids)
    if (id < 0 || id >= N) throw ContractError("rows_gather: row id out of range");
  const int E = static_cast<int>(ids.size());
  Tensor out({E, D}, 0.0, want_grad(x));
  const double* px = x.data();
  double* po = out.data();
  for (int e = 0; e < E; ++e)
    std::copy_n(px + static_cast<std::size_t>(ids[e]) * D, D, po + static_cast<std::size_t>(e) * D);
  auto og = out.grad_ptr();
  attach(out, {x}, [og, ids, D, E](Node& nd) {
    const Tensor& X = nd.parents[0];
    if (!X.requires_grad()) return;
    double* gx = X.grad_ptr()->data();
    const double* g = og->data();
    for (int e = 0; e < E; ++e) {
      double* row = gx + static_cast<std::size_t>(ids[e]) * D;
      const double* ge = g + static_cast<std::size_t>(e) * D;
      for (int j = 0; j < D; ++j) row[j] += ge[j];
    }
  });
  return out;
}

Tensor rowwise_dot_heads(const Tensor& a, const Tensor& b, int heads) {
  check_defined("rowwise_dot_heads", a);
  check_defined("rowwise_dot_heads", b);
  if (a.shape() != b.shape() || a.ndim() != 2)
    throw DimensionError("rowwise_dot_heads: operands must share a rank-2 shape: " + a.shape_str() +
                         " vs " + b.shape_str());
  const int E = a.shape()[0], D = a.shape()[1];
  if (heads <= 0 || D % heads != 0)
    throw ContractError("rowwise_dot_heads: width " + std::to_string(D) + " not divisible into " +
                        std::to_string(heads) + " heads");
  const int dh = D / heads;
  Tensor out({E, heads}, 0.0, want_grad(a, b));
  {
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (int e = 0; e < E; ++e) {
      const double* ra = pa + static_cast<std::size_t>(e) * D;
      const double* rb = pb + static_cast<std::size_t>(e) * D;
      for (int h = 0; h < heads; ++h) {
        double s = 0.0;
        for (int j = h * dh; j < (h + 1) * dh; ++j) s += ra[j] * rb[j];
        po[static_cast<std::size_t>(e) * heads + h] = s;
      }
    }
  }
  auto og = out.grad_ptr();
  attach(out, {a, b}, [og, E, D, heads, dh](Node& nd) {
    const Tensor& A = nd.parents[0];
    const Tensor& B = nd.parents[1];
    const double* g = og->data();
    const double* pa = A.data();
    const double* pb = B.data();
    double* ga = A.requires_grad() ? A.grad_ptr()->data() : nullptr;
    double* gb = B.requires_grad() ? B.grad_ptr()->data() : nullptr;
    for (int e = 0; e < E; ++e) {
      const std::size_t ro = static_cast<std::size_t>(e) * D;
      for (int h = 0; h < heads; ++h) {
        const double ge = g[static_cast<std::size_t>(e) * heads + h];
        if (ge == 0.0) continue;
        for (int j = h * dh; j < (h + 1) * dh; ++j) {
          if (ga) ga[ro + j] += ge * pb[ro + j];
          if (gb) gb[ro + j] += ge * pa[ro + j];
        }
      }
    }
  });
  return out;
}

namespace {

// Row indices grouped by segment id, each group in ascending row order.
std::vector<std::vector<int>> group_segments(const std::vector<int>& segment_of) {
  std::map<int, std::vector<int>> by_id;
  for (int i = 0; i < static_cast<int>(segment_of.size()); ++i) {
    if (segment_of[i] < 0) throw ContractError("segment_softmax: negative segment id");
    by_id[segment_of[i]].push_back(i);
  }
  std::vector<std::vector<int>> groups;
  groups.reserve(by_id.size());
  for (auto& kv : by_id) groups.push_back(std::move(kv.second));
  return groups;
}

}  // namespace

Tensor segment_softmax(const Tensor& scores, const std::vector<int>& segment_of) {
  check_defined("segment_softmax", scores);
  if (scores.ndim() > 2) throw DimensionError("segment_softmax: rank must be 1 or 2, got " + scores.shape_str());
  const int E = scores.ndim() == 2 ? scores.shape()[0] : scores.shape()[0];
  const int H = scores.ndim() == 2 ? scores.shape()[1] : 1;
  if (static_cast<int>(segment_of.size()) != E)
    throw DimensionError("segment_softmax: " + std::to_string(segment_of.size()) + " segment ids for " +
                         std::to_string(E) + " rows");
  auto groups = group_segments(segment_of);
  Tensor out(scores.shape(), 0.0, want_grad(scores));
  const double* ps = scores.data();
  double* po = out.data();
  for (const auto& rows : groups) {
    for (int h = 0; h < H; ++h) {
      double m = -1e308;
      for (int r : rows) m = std::max(m, ps[static_cast<std::size_t>(r) * H + h]);
      double denom = 0.0;
      for (int r : rows) denom += std::exp(ps[static_cast<std::size_t>(r) * H + h] - m);
      for (int r : rows)
        po[static_cast<std::size_t>(r) * H + h] = std::exp(ps[static_cast<std::size_t>(r) * H + h] - m) / denom;
    }
  }
  auto od = out.data_ptr();
  auto og = out.grad_ptr();
  attach(out, {scores}, [od, og, groups, H](Node& nd) {
    const Tensor& S = nd.parents[0];
    if (!S.requires_grad()) return;
    double* gs = S.grad_ptr()->data();
    const double* g = og->data();
    const double* y = od->data();
    for (const auto& rows : groups) {
      for (int h = 0; h < H; ++h) {
        double dot = 0.0;
        for (int r : rows) {
          const std::size_t i = static_cast<std::size_t>(r) * H + h;
          dot += g[i] * y[i];
        }
        for (int r : rows) {
          const std::size_t i = static_cast<std::size_t>(r) * H + h;
          gs[i] += y[i] * (g[i] - dot);
        }
      }
    }
  });
  return out;
}

std::vector<double> segment_softmax(const std::vector<double>& scores, const std::vector<int>& segment_of) {
  if (scores.size() != segment_of.size())
    throw DimensionError("segment_softmax: " + std::to_string(segment_of.size()) + " segment ids for " +
                         std::to_string(scores.size()) + " scores");
  std::vector<double> out(scores.size(), 0.0);
  for (const auto& rows : group_segments(segment_of)) {
    double m = -1e308;
    for (int r : rows) m = std::max(m, scores[r]);
    double denom = 0.0;
    for (int r : rows) denom += std::exp(scores[r] - m);
    for (int r : rows) out[r] = std::exp(scores[r] - m) / denom;
  }
  return out;
}

Tensor segment_weighted_sum(const Tensor& alpha, const Tensor& values, const std::vector<int>& src,
                            const std::vector<int>& dst, int num_nodes) {
  check_defined("segment_weighted_sum", alpha);
  check_defined("segment_weighted_sum", values);
  if (alpha.ndim() != 2 || values.ndim() != 2)
    throw DimensionError("segment_weighted_sum: requires rank-2 operands: " + alpha.shape_str() + " and " +
                         values.shape_str());
  const int E = alpha.shape()[0], H = alpha.shape()[1];
  const int N = values.shape()[0], D = values.shape()[1];
  if (H <= 0 || D % H != 0) throw ContractError("segment_weighted_sum: width not divisible by heads");
  if (static_cast<int>(src.size()) != E || static_cast<int>(dst.size()) != E)
    throw DimensionError("segment_weighted_sum: edge index lengths disagree with weights");
  for (int e = 0; e < E; ++e) {
    if (src[e] < 0 || src[e] >= N) throw ContractError("segment_weighted_sum: source id out of range");
    if (dst[e] < 0 || dst[e] >= num_nodes) throw ContractError("segment_weighted_sum: destination id out of range");
  }
  const int dh = D / H;
  Tensor out({num_nodes, D}, 0.0, want_grad(alpha, values));
  {
    const double* pa = alpha.data();
    const double* pv = values.data();
    double* po = out.data();
    for (int e = 0; e < E; ++e) {
      const double* vrow = pv + static_cast<std::size_t>(src[e]) * D;
      double* orow = po + static_cast<std::size_t>(dst[e]) * D;
      for (int h = 0; h < H; ++h) {
        const double w = pa[static_cast<std::size_t>(e) * H + h];
        if (w == 0.0) continue;
        for (int j = h * dh; j < (h + 1) * dh; ++j) orow[j] += w * vrow[j];
      }
    }
  }
  auto og = out.grad_ptr();
  attach(out, {alpha, values}, [og, src, dst, E, H, D, dh](Node& nd) {
    const Tensor& A = nd.parents[0];
    const Tensor& V = nd.parents[1];
    const double* g = og->data();
    const double* pa = A.data();
    const double* pv = V.data();
    double* ga = A.requires_grad() ? A.grad_ptr()->data() : nullptr;
    double* gv = V.requires_grad() ? V.grad_ptr()->data() : nullptr;
    for (int e = 0; e < E; ++e) {
      const double* grow = g + static_cast<std::size_t>(dst[e]) * D;
      const double* vrow = pv + static_cast<std::size_t>(src[e]) * D;
      double* gvrow = gv ? gv + static_cast<std::size_t>(src[e]) * D : nullptr;
      for (int h = 0; h < H; ++h) {
        const double w = pa[static_cast<std::size_t>(e) * H + h];
        double s = 0.0;
        for (int j = h * dh; j < (h + 1) * dh; ++j) {
          s += grow[j] * vrow[j];
          if (gvrow) gvrow[j] += w * grow[j];
        }
        if (ga) ga[static_cast<std::size_t>(e) * H + h] += s;
      }
    }
  });
  return out;
}

Tensor pairs_dot(const Tensor& z, const std::vector<int>& us, const std::vector<int>& vs) {
  check_defined("pairs_dot", z);
  if (z.ndim() != 2) throw DimensionError("pairs_dot: requires rank-2 input, got " + z.shape_str());
  if (us.size() != vs.size()) throw DimensionError("pairs_dot: endpoint lists differ in length");
  const int N = z.shape()[0], D = z.shape()[1];
  const int P = static_cast<int>(us.size());
  for (int p = 0; p < P; ++p)
    if (us[p] < 0 || us[p] >= N || vs[p] < 0 || vs[p] >= N)
      throw ContractError("pairs_dot: node id out of range");
  Tensor out({P}, 0.0, want_grad(z));
  {
    const double* pz = z.data();
    double* po = out.data();
    for (int p = 0; p < P; ++p) {
      const double* a = pz + static_cast<std::size_t>(us[p]) * D;
      const double* b = pz + static_cast<std::size_t>(vs[p]) * D;
      double s = 0.0;
      for (int j = 0; j < D; ++j) s += a[j] * b[j];
      po[p] = s;
    }
  }
  auto og = out.grad_ptr();
  attach(out, {z}, [og, us, vs, D, P](Node& nd) {
    const Tensor& Z = nd.parents[0];
    if (!Z.requires_grad()) return;
    const double* pz = Z.data();
    double* gz = Z.grad_ptr()->data();
    const double* g = og->data();
    for (int p = 0; p < P; ++p) {
      const double gp = g[p];
      if (gp == 0.0) continue;
      const double* a = pz + static_cast<std::size_t>(us[p]) * D;
      const double* b = pz + static_cast<std::size_t>(vs[p]) * D;
      double* ga = gz + static_cast<std::size_t>(us[p]) * D;
      double* gb = gz + static_cast<std::size_t>(vs[p]) * D;
      for (int j = 0; j < D; ++j) {
        ga[j] += gp * b[j];
        gb[j] += gp * a[j];
      }
    }
  });
  return out;
}

// ---- structured ops ----

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, bool training,
                  std::vector<double>* running_mean, std::vector<double>* running_var,
                  double momentum, double eps) {
  check_defined("batch_norm", x);
  if (x.ndim() != 2) throw DimensionError("batch_norm: requires rank-2 input, got " + x.shape_str());
  const int N = x.shape()[0], D = x.shape()[1];
  if (gamma.size() != static_cast<std::size_t>(D) || beta.size() != static_cast<std::size_t>(D))
    throw DimensionError("batch_norm: scale/shift width disagrees with input " + x.shape_str());
  if (!running_mean || !running_var || running_mean->size() != static_cast<std::size_t>(D) ||
      running_var->size() != static_cast<std::size_t>(D))
    throw ContractError("batch_norm: running buffers missing or mis-sized");
  if (N < 1) throw ContractError("batch_norm: empty batch");

  Tensor out({N, D}, 0.0, want_grad(x, gamma) || want_grad(beta));
  auto xhat = std::make_shared<std::vector<double>>(static_cast<std::size_t>(N) * D, 0.0);
  auto ivar = std::make_shared<std::vector<double>>(D, 0.0);
  const double* px = x.data();
  const double* pg = gamma.data();
  const double* pb = beta.data();
  double* po = out.data();

  if (training) {
    for (int j = 0; j < D; ++j) {
      long double m = 0.0L;
      for (int i = 0; i < N; ++i) m += px[static_cast<std::size_t>(i) * D + j];
      const double mean_j = static_cast<double>(m / N);
      long double v = 0.0L;
      for (int i = 0; i < N; ++i) {
        const double d = px[static_cast<std::size_t>(i) * D + j] - mean_j;
        v += d * d;
      }
      const double var_j = static_cast<double>(v / N);
      const double iv = 1.0 / std::sqrt(var_j + eps);
      (*ivar)[j] = iv;
      for (int i = 0; i < N; ++i) {
        const std::size_t idx = static_cast<std::size_t>(i) * D + j;
        const double xh = (px[idx] - mean_j) * iv;
        (*xhat)[idx] = xh;
        po[idx] = pg[j] * xh + pb[j];
      }
      const double var_run = N > 1 ? var_j * N / (N - 1) : var_j;
      (*running_mean)[j] = (1.0 - momentum) * (*running_mean)[j] + momentum * mean_j;
      (*running_var)[j] = (1.0 - momentum) * (*running_var)[j] + momentum * var_run;
    }
  } else {
    for (int j = 0; j < D; ++j) {
      const double iv = 1.0 / std::sqrt((*running_var)[j] + eps);
      (*ivar)[j] = iv;
      for (int i = 0; i < N; ++i) {
        const std::size_t idx = static_cast<std::size_t>(i) * D + j;
        const double xh = (px[idx] - (*running_mean)[j]) * iv;
        (*xhat)[idx] = xh;
        po[idx] = pg[j] * xh + pb[j];
      }
    }
  }

  auto og = out.grad_ptr();
  attach(out, {x, gamma, beta}, [og, xhat, ivar, N, D, training](Node& nd) {
    const Tensor& X = nd.parents[0];
    const Tensor& G = nd.parents[1];
    const Tensor& B = nd.parents[2];
    const double* g = og->data();
    const double* pg = G.data();
    double* gx = X.requires_grad() ? X.grad_ptr()->data() : nullptr;
    double* gg = G.requires_grad() ? G.grad_ptr()->data() : nullptr;
    double* gb = B.requires_grad() ? B.grad_ptr()->data() : nullptr;
    for (int j = 0; j < D; ++j) {
      long double sg = 0.0L, sgx = 0.0L;
      for (int i = 0; i < N; ++i) {
        const std::size_t idx = static_cast<std::size_t>(i) * D + j;
        sg += g[idx];
        sgx += g[idx] * (*xhat)[idx];
      }
      if (gg) gg[j] += static_cast<double>(sgx);
      if (gb) gb[j] += static_cast<double>(sg);
      if (gx) {
        const double iv = (*ivar)[j];
        if (training) {
          const double c = pg[j] * iv / N;
          for (int i = 0; i < N; ++i) {
            const std::size_t idx = static_cast<std::size_t>(i) * D + j;
            gx[idx] += c * (N * g[idx] - static_cast<double>(sg) - (*xhat)[idx] * static_cast<double>(sgx));
          }
        } else {
          const double c = pg[j] * iv;
          for (int i = 0; i < N; ++i) gx[static_cast<std::size_t>(i) * D + j] += c * g[static_cast<std::size_t>(i) * D + j];
        }
      }
    }
  });
  return out;
}

Tensor dropout(const Tensor& x, double p, bool training, SeededRng* rng) {
  check_defined("dropout", x);
  if (p < 0.0 || p >= 1.0) throw ContractError("dropout: rate must lie in [0,1)");
  if (!training || p == 0.0) return x;
  if (!rng) throw ContractError("dropout: rng required in train mode");
  Tensor mask(x.shape(), 0.0, false);
  const double keep_scale = 1.0 / (1.0 - p);
  double* pm = mask.data();
  for (std::size_t i = 0; i < mask.size(); ++i) pm[i] = (rng->uniform01() >= p) ? keep_scale : 0.0;
  return mul(x, mask);
}

Tensor stick_breaking(const Tensor& v) {
  check_defined("stick_breaking", v);
  if (v.ndim() != 1) throw DimensionError("stick_breaking: requires rank-1 input, got " + v.shape_str());
  const int K = v.shape()[0];
  if (K < 1) throw ContractError("stick_breaking: needs at least one stick");
  constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
  auto vc = std::make_shared<std::vector<double>>(K, 0.0);
  auto prefix = std::make_shared<std::vector<double>>(K, 0.0);
  Tensor out({K}, 0.0, want_grad(v));
  {
    const double* pv = v.data();
    double* po = out.data();
    double run = 1.0;
    for (int k = 0; k < K; ++k) {
      double c = pv[k] < lo ? lo : (pv[k] > hi ? hi : pv[k]);
      (*vc)[k] = c;
      (*prefix)[k] = run;
      po[k] = c * run;
      run *= (1.0 - c);
    }
  }
  auto od = out.data_ptr();
  auto og = out.grad_ptr();
  attach(out, {v}, [od, og, vc, prefix, K, lo, hi](Node& nd) {
    const Tensor& V = nd.parents[0];
    if (!V.requires_grad()) return;
    const double* pv = V.data();
    const double* g = og->data();
    const double* pi = od->data();
    double* gv = V.grad_ptr()->data();
    double suffix = 0.0;  // sum_{k > j} g_k * pi_k
    for (int j = K - 1; j >= 0; --j) {
      const bool clamped = (pv[j] < lo || pv[j] > hi);
      if (!clamped) gv[j] += g[j] * (*prefix)[j] - suffix / (1.0 - (*vc)[j]);
      suffix += g[j] * pi[j];
    }
  });
  return out;
}

Tensor kumaraswamy_sample(const Tensor& log_c, const Tensor& log_d, const Tensor& u) {
  check_defined("kumaraswamy_sample", log_c);
  check_defined("kumaraswamy_sample", log_d);
  check_defined("kumaraswamy_sample", u);
  if (log_c.shape() != log_d.shape() || log_c.shape() != u.shape())
    throw DimensionError("kumaraswamy_sample: shapes disagree: " + log_c.shape_str() + ", " +
                         log_d.shape_str() + ", " + u.shape_str());
  const std::size_t K = u.size();
  for (double x : u.vec())
    if (!(x > 0.0 && x < 1.0)) throw ContractError("kumaraswamy_sample: noise outside (0,1)");
  Tensor out(log_c.shape(), 0.0, want_grad(log_c, log_d));
  auto s_arr = std::make_shared<std::vector<double>>(K, 0.0);
  auto lw_arr = std::make_shared<std::vector<double>>(K, 0.0);
  {
    const double* plc = log_c.data();
    const double* pld = log_d.data();
    const double* pu = u.data();
    double* po = out.data();
    for (std::size_t k = 0; k < K; ++k) {
      const double c = std::exp(plc[k]);
      const double d = std::exp(pld[k]);
      const double s = std::log(pu[k]) / d;  // < 0
      double lw = log1mexp(s);
      if (lw < -690.0) lw = -690.0;  // keep w representable
      (*s_arr)[k] = s;
      (*lw_arr)[k] = lw;
      po[k] = std::exp(lw / c);
    }
  }
  auto od = out.data_ptr();
  auto og = out.grad_ptr();
  attach(out, {log_c, log_d}, [od, og, s_arr, lw_arr, K](Node& nd) {
    const Tensor& LC = nd.parents[0];
    const Tensor& LD = nd.parents[1];
    const double* plc = LC.data();
    const double* g = og->data();
    const double* v = od->data();
    double* glc = LC.requires_grad() ? LC.grad_ptr()->data() : nullptr;
    double* gld = LD.requires_grad() ? LD.grad_ptr()->data() : nullptr;
    for (std::size_t k = 0; k < K; ++k) {
      const double c = std::exp(plc[k]);
      const double s = (*s_arr)[k];
      const double lw = (*lw_arr)[k];
      if (glc) glc[k] += g[k] * (-v[k] * lw / c);
      if (gld) gld[k] += g[k] * (v[k] * s * std::exp(s - lw) / c);
    }
  });
  return out;
}

}  // namespace blocklink
