#pragma once

namespace blocklink {

inline constexpr double kEulerGamma = 0.57721566490153286060651209008240;

double digamma(double x);
double trigamma(double x);
double log_beta(double a, double b);

double sigmoid(double x);
double logit(double p);
double softplus(double x);
// log(1 - exp(x)) for x < 0, stable near both ends.
double log1mexp(double x);

// Mean of Kumaraswamy(c, d): d * B(1 + 1/c, d).
double kumaraswamy_mean(double c, double d);

}  // namespace blocklink
