#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "blocklink/errors.hpp"

namespace blocklink {

// All randomness in a run flows from one root seed, split into independent
// substreams per subsystem so each component is reproducible on its own.
enum class Stream : std::uint64_t {
  topology = 1,
  init = 2,
  noise = 3,
  sampling = 4,
  split = 5,
  evaluation = 6,
  generate = 7,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic across platforms: the engine is the fully specified
// mt19937_64 and every transform below is hand-rolled (std distributions are
// implementation-defined). Identical seed + call sequence => identical draws.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(splitmix64(seed)), seed_(seed) {}

  SeededRng substream(Stream s) const { return substream(static_cast<std::uint64_t>(s)); }
  SeededRng substream(std::uint64_t tag) const {
    return SeededRng(splitmix64(seed_ ^ splitmix64(tag * 0x9e3779b97f4a7c15ull + 0x165667b19e3779f9ull)));
  }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // 53-bit uniform in [0,1).
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform clamped into (eps, 1-eps); used ahead of log transforms.
  double uniform_open01(double eps) {
    double u = uniform01();
    if (u < eps) return eps;
    if (u > 1.0 - eps) return 1.0 - eps;
    return u;
  }

  // Box-Muller with cached spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform_open01(1e-300);
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // -log(-log u) with u clamped into (1e-12, 1-1e-12).
  double gumbel() { return -std::log(-std::log(uniform_open01(1e-12))); }

  // log u - log(1-u), standard Binary-Concrete noise.
  double logistic() {
    double u = uniform_open01(1e-12);
    return std::log(u) - std::log1p(-u);
  }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ContractError("rng: below(0)");
    std::uint64_t limit = ~0ull - (~0ull % n + 1) % n;
    for (;;) {
      std::uint64_t x = engine_();
      if (x <= limit) return x % n;
    }
  }

  template <class T>
  void shuffle(std::vector<T>& xs) {
    for (std::size_t i = xs.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(xs[i - 1], xs[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace blocklink
