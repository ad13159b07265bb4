#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "cavkit/common.hpp"

namespace cavkit {

// Counter-based random stream: output k of stream (seed, name) is a pure
// function splitmix64(key + k * GOLDEN), so independently named substreams
// drawn from one seed are reproducible regardless of evaluation order.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed, std::string_view substream = "") {
    key_ = seed;
    for (char c : substream) key_ = mix(key_ ^ static_cast<std::uint64_t>(c));
  }

  RandomStream substream(std::string_view name) const {
    RandomStream s(*this);
    for (char c : name) s.key_ = mix(s.key_ ^ static_cast<std::uint64_t>(c));
    s.counter_ = 0;
    return s;
  }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * 0x9E3779B97F4A7C15ULL); }

  /// Uniform in [0,1).
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (deterministic pairing).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * pi * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * pi * u2);
  }

  cxd complex_normal() { return {normal(), normal()}; }

  int poisson(double lambda) {
    require(lambda >= 0.0, "poisson: negative mean");
    // inversion by sequential search; fine for the moderate means used here
    if (lambda > 60.0) {
      // normal approximation with continuity correction for large means
      const int k = static_cast<int>(std::lround(lambda + std::sqrt(lambda) * normal()));
      return k < 0 ? 0 : k;
    }
    double p = std::exp(-lambda), cdf = p, u = uniform();
    int k = 0;
    while (u > cdf && k < 10000) {
      ++k;
      p *= lambda / k;
      cdf += p;
    }
    return k;
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// Haar-random pure state of dimension d (normalized complex Gaussian vector).
inline Vec haar_state(int d, RandomStream& rng) {
  Vec v(d);
  for (int i = 0; i < d; ++i) v(i) = rng.complex_normal();
  v /= v.norm();
  return v;
}

}  // namespace cavkit
