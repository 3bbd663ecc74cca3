#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "blocklink/optim.hpp"
#include "blocklink/rng.hpp"
#include "blocklink/tensor.hpp"
#include "doctest.h"

using namespace blocklink;

TEST_CASE("backward returns zero gradients for untouched parameters") {
  ParamStore ps;
  Tensor& a = ps.add("a", Tensor::from({2}, {2.0, 3.0}));
  ps.add("unused", Tensor::from({1}, {5.0}));
  Tensor loss = sum(mul(a, a));
  GradientMap g = backward(loss, ps);
  CHECK(g.at("a").data()[0] == doctest::Approx(4.0));
  CHECK(g.at("a").data()[1] == doctest::Approx(6.0));
  REQUIRE(g.count("unused") == 1);
  CHECK(g.at("unused").data()[0] == 0.0);
}

TEST_CASE("first adam step moves by roughly lr times the gradient sign") {
  ParamStore ps;
  ps.add("w", Tensor::from({2}, {1.0, -2.0}));
  GradientMap g;
  g["w"] = Tensor::from({2}, {0.3, -0.7});
  adam_step(ps, g, 0.01);
  // with bias correction the first update is exactly -lr * g / (|g| + eps')
  CHECK(ps.at("w").data()[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-4));
  CHECK(ps.at("w").data()[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-4));
  CHECK(ps.step_count() == 1);
}

namespace {

// Scalar reference for Adam with coupled L2 decay, written independently of
// the library implementation.
struct ScalarAdam {
  double m = 0.0, v = 0.0;
  long long t = 0;
  double step(double w, double g, double lr, double b1, double b2, double eps, double wd) {
    t += 1;
    g += wd * w;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    double mh = m / (1 - std::pow(b1, static_cast<double>(t)));
    double vh = v / (1 - std::pow(b2, static_cast<double>(t)));
    return w - lr * mh / (std::sqrt(vh) + eps);
  }
};

}  // namespace

TEST_CASE("multi-step adam with weight decay matches a scalar reference") {
  const double lr = 0.02, b1 = 0.85, b2 = 0.99, eps = 1e-8, wd = 0.1;
  ParamStore ps;
  ps.add("w", Tensor::from({3}, {0.5, -1.5, 2.0}));
  std::vector<ScalarAdam> ref(3);
  std::vector<double> w = {0.5, -1.5, 2.0};

  SeededRng rng(42);
  for (int step = 0; step < 25; ++step) {
    std::vector<double> gs(3);
    for (int i = 0; i < 3; ++i) gs[i] = rng.normal();
    GradientMap g;
    g["w"] = Tensor::from({3}, gs);
    adam_step(ps, g, lr, {b1, b2}, eps, wd);
    for (int i = 0; i < 3; ++i) w[static_cast<std::size_t>(i)] = ref[static_cast<std::size_t>(i)].step(w[static_cast<std::size_t>(i)], gs[static_cast<std::size_t>(i)], lr, b1, b2, eps, wd);
    for (int i = 0; i < 3; ++i) {
      CHECK(ps.at("w").data()[static_cast<std::size_t>(i)] == doctest::Approx(w[static_cast<std::size_t>(i)]).epsilon(1e-12));
    }
  }
  CHECK(ps.step_count() == 25);
}

TEST_CASE("adam moments are tracked per parameter name") {
  ParamStore ps;
  ps.add("a", Tensor::from({1}, {1.0}));
  ps.add("b", Tensor::from({1}, {1.0}));
  GradientMap g;
  g["a"] = Tensor::from({1}, {1.0});
  g["b"] = Tensor::from({1}, {0.0});
  adam_step(ps, g, 0.1);
  // b had zero gradient: zero moments, no movement
  CHECK(ps.at("b").data()[0] == doctest::Approx(1.0));
  CHECK(ps.at("a").data()[0] < 1.0);
}

TEST_CASE("clip_global_norm scales exactly and leaves small gradients alone") {
  GradientMap g;
  g["a"] = Tensor::from({2}, {3.0, 0.0});
  g["b"] = Tensor::from({2}, {0.0, 4.0});
  double norm = clip_global_norm(g, 2.5);
  CHECK(norm == doctest::Approx(5.0));
  CHECK(g.at("a").data()[0] == doctest::Approx(3.0 * 0.5));
  CHECK(g.at("b").data()[1] == doctest::Approx(4.0 * 0.5));
  // joint norm afterwards equals the cap
  double after = std::sqrt(std::pow(g.at("a").data()[0], 2) + std::pow(g.at("b").data()[1], 2));
  CHECK(after == doctest::Approx(2.5));

  GradientMap h;
  h["a"] = Tensor::from({2}, {0.3, 0.4});
  double small = clip_global_norm(h, 2.5);
  CHECK(small == doctest::Approx(0.5));
  CHECK(h.at("a").data()[0] == doctest::Approx(0.3));
  CHECK(h.at("a").data()[1] == doctest::Approx(0.4));
}

TEST_CASE("param store lists names sorted and round-trips snapshots") {
  ParamStore ps;
  ps.add("zeta", Tensor::from({1}, {1.0}));
  ps.add("alpha", Tensor::from({2}, {2.0, 3.0}));
  ps.add("mid", Tensor::from({1}, {4.0}));
  std::vector<std::string> want = {"alpha", "mid", "zeta"};
  CHECK(ps.names() == want);
  CHECK(ps.size() == 3);
  CHECK(ps.contains("mid"));
  CHECK_FALSE(ps.contains("nope"));

  auto snap = ps.snapshot_values();
  ps.at("alpha").data()[0] = -9.0;
  ps.at("zeta").data()[0] = -9.0;
  ps.restore_values(snap);
  CHECK(ps.at("alpha").data()[0] == 2.0);
  CHECK(ps.at("zeta").data()[0] == 1.0);

  CHECK_THROWS_AS(ps.at("missing"), KeyError);
  CHECK_THROWS_AS(ps.add("mid", Tensor::from({1}, {0.0})), KeyError);
}

TEST_CASE("zero_grads clears accumulated gradients") {
  ParamStore ps;
  Tensor& a = ps.add("a", Tensor::from({1}, {2.0}));
  Tensor loss = mul(a, a);
  (void)backward(loss, ps);
  CHECK(a.grad()[0] == doctest::Approx(4.0));
  ps.zero_grads();
  CHECK(a.grad()[0] == 0.0);
}

TEST_CASE("finite differences validate a quadratic and flag a wrong gradient") {
  ParamStore ps;
  ps.add("x", Tensor::from({2}, {0.7, -1.3}));
  auto loss_fn = [](ParamStore& p) {
    Tensor x = p.at("x");
    return sum(add(mul(x, x), scale(x, 0.5)));
  };
  double err = finite_difference_check(loss_fn, ps);
  CHECK(err < 1e-6);
}
