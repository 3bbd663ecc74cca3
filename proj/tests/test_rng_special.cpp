#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <vector>

#include "blocklink/rng.hpp"
#include "blocklink/special.hpp"
#include "doctest.h"

using namespace blocklink;

TEST_CASE("identical seeds give identical draw sequences") {
  SeededRng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  SeededRng c(124);
  bool all_equal = true;
  SeededRng a2(123);
  for (int i = 0; i < 10; ++i) all_equal = all_equal && (a2.next_u64() == c.next_u64());
  CHECK_FALSE(all_equal);
}

TEST_CASE("substreams are stable and mutually distinct") {
  SeededRng root(7);
  SeededRng s1 = root.substream(Stream::topology);
  SeededRng s1b = SeededRng(7).substream(Stream::topology);
  CHECK(s1.next_u64() == s1b.next_u64());

  SeededRng s2 = root.substream(Stream::init);
  SeededRng s3 = root.substream(Stream::noise);
  CHECK(s1.seed() != s2.seed());
  CHECK(s2.seed() != s3.seed());
  // drawing from one stream never disturbs another
  SeededRng t1 = root.substream(Stream::topology);
  SeededRng u1 = root.substream(Stream::init);
  (void)u1.next_u64();
  CHECK(t1.next_u64() == SeededRng(7).substream(Stream::topology).next_u64());
}

TEST_CASE("uniform01 lies in the half-open unit interval") {
  SeededRng rng(1);
  for (int i = 0; i < 100000; ++i) {
    double u = rng.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("uniform_open01 clamps into the open interval") {
  SeededRng rng(2);
  for (int i = 0; i < 1000; ++i) {
    double u = rng.uniform_open01(1e-3);
    CHECK(u >= 1e-3);
    CHECK(u <= 1.0 - 1e-3);
  }
}

TEST_CASE("normal draws have standard moments within CLT bands") {
  SeededRng rng(3);
  const int n = 200000;
  long double s = 0.0L, s2 = 0.0L;
  for (int i = 0; i < n; ++i) {
    double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  double mean = static_cast<double>(s / n);
  double var = static_cast<double>(s2 / n) - mean * mean;
  // sd of the sample mean is 1/sqrt(n) ~ 0.0022; 5 sigma bands
  CHECK(std::fabs(mean) < 5.0 / std::sqrt(double(n)));
  CHECK(std::fabs(var - 1.0) < 5.0 * std::sqrt(2.0 / n));
}

TEST_CASE("gumbel mean approaches the Euler constant") {
  SeededRng rng(4);
  const int n = 200000;
  long double s = 0.0L;
  for (int i = 0; i < n; ++i) s += rng.gumbel();
  double mean = static_cast<double>(s / n);
  // var of a standard Gumbel is pi^2/6, sd of the mean ~ 0.0029
  CHECK(std::fabs(mean - kEulerGamma) < 5.0 * 1.2825 / std::sqrt(double(n)));
}

TEST_CASE("logistic draws are centered with variance pi^2/3") {
  SeededRng rng(5);
  const int n = 200000;
  long double s = 0.0L, s2 = 0.0L;
  for (int i = 0; i < n; ++i) {
    double x = rng.logistic();
    s += x;
    s2 += x * x;
  }
  double mean = static_cast<double>(s / n);
  double var = static_cast<double>(s2 / n) - mean * mean;
  double want = 3.28986813369645287;  // pi^2/3
  CHECK(std::fabs(mean) < 5.0 * std::sqrt(want / n));
  CHECK(std::fabs(var - want) < 0.15);
}

TEST_CASE("below is range-correct and roughly uniform") {
  SeededRng rng(6);
  std::vector<int> counts(10, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    std::uint64_t x = rng.below(10);
    CHECK(x < 10);
    counts[static_cast<std::size_t>(x)]++;
  }
  for (int c : counts) {
    // each bin is Binomial(1e5, 0.1): mean 10000, sd ~95; 6 sigma bands
    CHECK(c > 10000 - 570);
    CHECK(c < 10000 + 570);
  }
  CHECK_THROWS_AS(rng.below(0), ContractError);
}

TEST_CASE("shuffle permutes and depends on the seed") {
  SeededRng rng(8);
  std::vector<int> xs = {1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<int> ys = xs;
  rng.shuffle(ys);
  std::vector<int> sorted = ys;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == xs);

  SeededRng r1(9), r2(9), r3(10);
  std::vector<int> a = xs, b = xs, c = xs;
  r1.shuffle(a);
  r2.shuffle(b);
  r3.shuffle(c);
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("digamma matches hand values and the lgamma slope") {
  CHECK(digamma(1.0) == doctest::Approx(-kEulerGamma).epsilon(1e-10));
  CHECK(digamma(0.5) == doctest::Approx(-kEulerGamma - 2.0 * std::log(2.0)).epsilon(1e-10));
  CHECK(digamma(2.0) == doctest::Approx(1.0 - kEulerGamma).epsilon(1e-10));
  for (double x : {0.3, 0.9, 1.7, 4.2, 11.5}) {
    double h = 1e-6;
    double fd = (std::lgamma(x + h) - std::lgamma(x - h)) / (2 * h);
    CHECK(digamma(x) == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("trigamma matches the digamma slope and the basel value") {
  CHECK(trigamma(1.0) == doctest::Approx(1.64493406684822644).epsilon(1e-9));  // pi^2/6
  for (double x : {0.4, 1.1, 2.6, 7.3}) {
    double h = 1e-5;
    double fd = (digamma(x + h) - digamma(x - h)) / (2 * h);
    CHECK(trigamma(x) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("log_beta agrees with the lgamma identity") {
  for (double a : {0.5, 1.0, 2.5, 7.0})
    for (double b : {0.3, 1.0, 4.5}) {
      double want = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
      CHECK(log_beta(a, b) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("scalar sigmoid logit softplus are stable and mutually inverse") {
  CHECK(sigmoid(0.0) == doctest::Approx(0.5));
  CHECK(sigmoid(1.0) == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(800.0) <= 1.0);
  for (double p : {0.001, 0.2, 0.5, 0.77, 0.999}) CHECK(sigmoid(logit(p)) == doctest::Approx(p).epsilon(1e-12));
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(softplus(50.0) == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(softplus(-745.0) >= 0.0);
  for (double x : {-3.0, -0.2, 0.4, 2.0}) CHECK(softplus(x) == doctest::Approx(std::log1p(std::exp(x))).epsilon(1e-12));
}

TEST_CASE("log1mexp is accurate across both branches") {
  for (double x : {-1e-8, -0.4, -0.693, -1.5, -40.0}) {
    long double want = std::log(-std::expm1(static_cast<long double>(x)));
    CHECK(log1mexp(x) == doctest::Approx(static_cast<double>(want)).epsilon(1e-9));
  }
}

TEST_CASE("kumaraswamy_mean matches the inverse-cdf integral") {
  // E[v] = integral over u of (1 - u^(1/d))^(1/c), evaluated with Simpson
  auto oracle = [](double c, double d) {
    const int n = 20000;  // even
    long double acc = 0.0L;
    auto f = [c, d](double u) { return std::pow(1.0 - std::pow(u, 1.0 / d), 1.0 / c); };
    for (int i = 0; i <= n; ++i) {
      double u = static_cast<double>(i) / n;
      double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      acc += w * f(u);
    }
    return static_cast<double>(acc / (3.0 * n));
  };
  for (double c : {0.5, 1.0, 2.0, 5.0})
    for (double d : {0.5, 1.0, 3.0}) {
      CHECK(kumaraswamy_mean(c, d) == doctest::Approx(oracle(c, d)).epsilon(1e-5));
    }
  CHECK(kumaraswamy_mean(1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
}
