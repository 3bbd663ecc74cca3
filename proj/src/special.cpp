#include "blocklink/special.hpp"

#include <cmath>

#include "blocklink/errors.hpp"

namespace blocklink {

// Recurrence up to x >= 6, then the asymptotic series. Positive x only.
double digamma(double x) {
  if (!(x > 0.0)) throw ContractError("digamma: requires x > 0");
  double r = 0.0;
  while (x < 6.0) {
    r -= 1.0 / x;
    x += 1.0;
  }
  double inv = 1.0 / x;
  double inv2 = inv * inv;
  r += std::log(x) - 0.5 * inv;
  r -= inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))));
  return r;
}

double trigamma(double x) {
  if (!(x > 0.0)) throw ContractError("trigamma: requires x > 0");
  double r = 0.0;
  while (x < 6.0) {
    r += 1.0 / (x * x);
    x += 1.0;
  }
  double inv = 1.0 / x;
  double inv2 = inv * inv;
  r += inv * (1.0 + 0.5 * inv + inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0))));
  return r;
}

double log_beta(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw ContractError("log_beta: requires a, b > 0");
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double log1mexp(double x) {
  // x < 0; switch point at -ln 2 per the usual accuracy argument.
  if (x >= 0.0) throw ContractError("log1mexp: requires x < 0");
  if (x > -0.6931471805599453) return std::log(-std::expm1(x));
  return std::log1p(-std::exp(x));
}

double kumaraswamy_mean(double c, double d) {
  if (!(c > 0.0) || !(d > 0.0)) throw ContractError("kumaraswamy_mean: requires c, d > 0");
  return d * std::exp(log_beta(1.0 + 1.0 / c, d));
}

}  // namespace blocklink
