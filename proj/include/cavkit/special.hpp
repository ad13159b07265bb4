#pragma once

#include <cmath>
#include <limits>

#include "cavkit/common.hpp"

namespace cavkit {

/// Principal branch of the Lambert W function (w e^w = z) for z >= -1/e,
/// refined with Halley iterations to machine precision.
inline double lambert_w0(double z) {
  require(z >= -std::exp(-1.0) - 1e-300, "lambert_w0: argument below -1/e");
  if (z == 0.0) return 0.0;
  double w;
  if (z < -0.25) {
    const double p = std::sqrt(2.0 * (std::exp(1.0) * z + 1.0));
    w = -1.0 + p - p * p / 3.0;
  } else if (z < 3.0) {
    w = z / (1.0 + z);  // crude start near the origin
  } else {
    const double l = std::log(z);
    w = l - std::log(l);
  }
  for (int it = 0; it < 60; ++it) {
    const double e = std::exp(w);
    const double f = w * e - z;
    const double dw = f / (e * (w + 1.0) - 0.5 * (w + 2.0) * f / (w + 1.0));
    w -= dw;
    if (std::abs(dw) <= 1e-16 * (1.0 + std::abs(w))) return w;
  }
  throw numerical_error("lambert_w0: did not converge");
}

/// Log of the factorial via lgamma.
inline double log_factorial(int n) { return std::lgamma(n + 1.0); }

/// Poisson probability mass e^{-lambda} lambda^k / k!.
inline double poisson_pmf(int k, double lambda) {
  if (lambda == 0.0) return k == 0 ? 1.0 : 0.0;
  return std::exp(-lambda + k * std::log(lambda) - log_factorial(k));
}

}  // namespace cavkit
