#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "cavkit/common.hpp"
#include "cavkit/quad.hpp"
#include "cavkit/rng.hpp"
#include "cavkit/special.hpp"

namespace cavkit::metrology {

enum class ProbeKind { ecs, qwp, noon };
enum class Scheme { homodyne, counting };

/// Loss and dephasing acting on the interferometer and control qubit.
struct ChannelParams {
  double loss = 0.0;       // per-photon loss probability p
  double chi = 0.0;        // qubit dephasing exponent
  double theta = 0.0;      // qubit phase offset (shifts the readout fringes)

  void check() const {
    require(loss >= 0.0 && loss <= 1.0, "ChannelParams: loss out of range");
    require(chi >= 0.0, "ChannelParams: negative dephasing exponent");
  }
};

// ---- photon-number bookkeeping -----------------------------------------------

/// Mean photon number of a probe with amplitude alpha.
inline double mean_photon(ProbeKind kind, double alpha) {
  require(alpha >= 0.0, "mean_photon: amplitude must be nonnegative");
  const double a2 = alpha * alpha;
  switch (kind) {
    case ProbeKind::qwp:
      return a2;
    case ProbeKind::ecs:
      return a2 / (1.0 + std::exp(-a2));
    case ProbeKind::noon:
      return a2;  // N00N states are indexed by photon number directly
  }
  return a2;
}

/// Amplitude that realizes a target mean photon number (bracketed Newton for
/// the two-branch superposition state).
inline double inverse_amplitude(ProbeKind kind, double nbar) {
  require(nbar >= 0.0, "inverse_amplitude: negative mean photon number");
  if (kind != ProbeKind::ecs) return std::sqrt(nbar);
  if (nbar == 0.0) return 0.0;
  // n(a) = a^2/(1+e^{-a^2}) is increasing; bracket then refine
  double lo = std::sqrt(nbar), hi = std::sqrt(2.0 * nbar + 1.0);
  while (mean_photon(ProbeKind::ecs, hi) < nbar) hi *= 1.5;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f = mean_photon(ProbeKind::ecs, mid) - nbar;
    const double a2 = mid * mid, e = std::exp(-a2);
    const double df = 2.0 * mid * (1.0 + e + a2 * e) / sq(1.0 + e);
    double next = mid - f / df;
    if (!(next > lo && next < hi)) next = f > 0.0 ? 0.5 * (lo + mid) : 0.5 * (mid + hi);
    (f > 0.0 ? hi : lo) = mid;
    if (std::abs(f) < 1e-14 * (1.0 + nbar)) return mid;
    lo = std::min(lo, next);
    hi = std::max(hi, next);
  }
  return 0.5 * (lo + hi);
}

// ---- quantum Fisher information ------------------------------------------------

/// Fisher information of the phase-shifted probe with respect to the
/// half-difference photon-number generator.
inline double quantum_fisher_info(ProbeKind kind, double nbar,
                                  const ChannelParams& ch = {}) {
  ch.check();
  const double p = ch.loss, q = 1.0 - p;
  switch (kind) {
    case ProbeKind::qwp:
      return std::exp(-2.0 * p * nbar - 2.0 * ch.chi) * sq(q * nbar) + q * nbar;
    case ProbeKind::ecs: {
      const double w = lambert_w0(nbar * std::exp(-nbar));
      if (p == 0.0) return nbar * nbar + (1.0 + w) * nbar;
      return sq(q * nbar) * std::exp(-2.0 * p * (nbar + w)) +
             q * nbar * (1.0 + q * w);
    }
    case ProbeKind::noon:
      require(p == 0.0, "quantum_fisher_info: lossless model only for noon probes");
      return nbar * nbar;
  }
  return 0.0;
}

// ---- outcome models ---------------------------------------------------------------

/// Homodyne outcome (two quadratures, plus the qubit bit for qwp probes).
struct HomodyneOutcome {
  double x_plus;
  double x_minus;
  int qubit = 0;  // +1 / -1 for qwp; unused for ecs
};

struct CountingOutcome {
  int m;          // photons at the + output
  int n;          // photons at the - output
  int qubit = 0;  // +1 / -1 for qwp; unused for ecs
};

namespace detail {
struct Gaussians {
  double mu_p, mu_m;  // quadrature means
};
inline Gaussians means(double alpha, double p, double phi) {
  const double a = std::sqrt(1.0 - p) * alpha;
  return {a * std::sin(0.5 * phi), a * std::cos(0.5 * phi)};
}
inline double g1(double x, double mu) {
  return std::exp(-sq(x - mu)) / std::sqrt(pi);
}
}  // namespace detail

/// Probability density / mass evaluators and samplers. alpha is treated as
/// real and nonnegative; the local-oscillator phases absorb the mean phase.
class OutcomeModel {
 public:
  OutcomeModel(Scheme scheme, ProbeKind kind, double alpha, ChannelParams ch)
      : scheme_(scheme), kind_(kind), alpha_(alpha), ch_(ch) {
    require(kind != ProbeKind::noon, "OutcomeModel: counting/homodyne probes only");
    require(alpha >= 0.0, "OutcomeModel: amplitude must be nonnegative");
    ch_.check();
    norm_ecs_ = 1.0 / (2.0 * (1.0 + std::exp(-alpha * alpha)));
  }

  Scheme scheme() const { return scheme_; }
  ProbeKind kind() const { return kind_; }
  double alpha() const { return alpha_; }

  double coherence_factor() const {
    return std::exp(-ch_.loss * alpha_ * alpha_ - ch_.chi);
  }

  // -- homodyne density ------------------------------------------------------

  double density(const HomodyneOutcome& o, double phi) const {
    require(scheme_ == Scheme::homodyne, "density: homodyne outcomes expected");
    const auto mu = detail::means(alpha_, ch_.loss, phi);
    const double gg = detail::g1(o.x_plus, mu.mu_p) * detail::g1(o.x_minus, mu.mu_m);
    if (kind_ == ProbeKind::ecs) {
      const double fringe = std::cos(2.0 * (o.x_plus * mu.mu_m - o.x_minus * mu.mu_p));
      return 2.0 * norm_ecs_ * (1.0 + coherence_factor() * fringe) * gg;
    }
    const double arg =
        2.0 * (o.x_plus * mu.mu_m - o.x_minus * mu.mu_p) + ch_.theta;
    return 0.5 * (1.0 + o.qubit * coherence_factor() * std::cos(arg)) * gg;
  }

  /// Analytic derivative of log density with respect to phi.
  double dlog_density(const HomodyneOutcome& o, double phi) const {
    const auto mu = detail::means(alpha_, ch_.loss, phi);
    const double dmu_p = 0.5 * mu.mu_m, dmu_m = -0.5 * mu.mu_p;
    const double arg0 = 2.0 * (o.x_plus * mu.mu_m - o.x_minus * mu.mu_p);
    const double darg = 2.0 * (o.x_plus * dmu_m - o.x_minus * dmu_p);
    double d = 2.0 * (o.x_plus - mu.mu_p) * dmu_p + 2.0 * (o.x_minus - mu.mu_m) * dmu_m;
    const double c = coherence_factor();
    if (kind_ == ProbeKind::ecs) {
      d += -c * std::sin(arg0) * darg / (1.0 + c * std::cos(arg0));
    } else {
      const double arg = arg0 + ch_.theta;
      d += -o.qubit * c * std::sin(arg) * darg /
           (1.0 + o.qubit * c * std::cos(arg));
    }
    return d;
  }

  HomodyneOutcome sample_homodyne(double phi, RandomStream& rng) const {
    const auto mu = detail::means(alpha_, ch_.loss, phi);
    HomodyneOutcome o;
    if (kind_ == ProbeKind::qwp) {
      o.x_plus = mu.mu_p + rng.normal() / std::sqrt(2.0);
      o.x_minus = mu.mu_m + rng.normal() / std::sqrt(2.0);
      const double arg =
          2.0 * (o.x_plus * mu.mu_m - o.x_minus * mu.mu_p) + ch_.theta;
      const double pplus = 0.5 * (1.0 + coherence_factor() * std::cos(arg));
      o.qubit = rng.bernoulli(pplus) ? 1 : -1;
      return o;
    }
    // ecs: rejection against the product-gaussian envelope
    const double c = coherence_factor();
    for (int it = 0; it < 100000; ++it) {
      o.x_plus = mu.mu_p + rng.normal() / std::sqrt(2.0);
      o.x_minus = mu.mu_m + rng.normal() / std::sqrt(2.0);
      const double fringe = std::cos(2.0 * (o.x_plus * mu.mu_m - o.x_minus * mu.mu_p));
      if (rng.uniform() * (1.0 + c) <= 1.0 + c * fringe) return o;
    }
    throw numerical_error("sample_homodyne: rejection sampling stalled");
  }

  // -- counting mass ----------------------------------------------------------

  double poisson_mean() const { return 0.5 * (1.0 - ch_.loss) * alpha_ * alpha_; }

  double mass(const CountingOutcome& o, double phi) const {
    require(scheme_ == Scheme::counting, "mass: counting outcomes expected");
    const double lam = poisson_mean();
    const double pp = poisson_pmf(o.m, lam) * poisson_pmf(o.n, lam);
    if (kind_ == ProbeKind::ecs) {
      const double fringe = std::cos((o.m + o.n) * phi + o.m * pi);
      return 2.0 * norm_ecs_ * (1.0 + coherence_factor() * fringe) * pp;
    }
    const double arg = (o.m + o.n) * phi - o.m * pi - ch_.theta;
    return 0.5 * (1.0 + o.qubit * coherence_factor() * std::cos(arg)) * pp;
  }

  double dlog_mass(const CountingOutcome& o, double phi) const {
    const double tot = o.m + o.n;
    const double c = coherence_factor();
    if (kind_ == ProbeKind::ecs) {
      const double arg = tot * phi + o.m * pi;
      return -c * std::sin(arg) * tot / (1.0 + c * std::cos(arg));
    }
    const double arg = tot * phi - o.m * pi - ch_.theta;
    return -o.qubit * c * std::sin(arg) * tot / (1.0 + o.qubit * c * std::cos(arg));
  }

  /// Truncation bound for photon-count sums (tail mass is negligible beyond).
  int count_cutoff() const {
    const double nb = alpha_ * alpha_;
    return static_cast<int>(std::ceil(nb + 12.0 * std::sqrt(nb) + 20.0));
  }

  CountingOutcome sample_counting(double phi, RandomStream& rng) const {
    const double lam = poisson_mean();
    CountingOutcome o;
    if (kind_ == ProbeKind::qwp) {
      o.m = rng.poisson(lam);
      o.n = rng.poisson(lam);
      const double arg = (o.m + o.n) * phi - o.m * pi - ch_.theta;
      const double pplus = 0.5 * (1.0 + coherence_factor() * std::cos(arg));
      o.qubit = rng.bernoulli(pplus) ? 1 : -1;
      return o;
    }
    const double c = coherence_factor();
    for (int it = 0; it < 100000; ++it) {
      o.m = rng.poisson(lam);
      o.n = rng.poisson(lam);
      const double fringe = std::cos((o.m + o.n) * phi + o.m * pi);
      if (rng.uniform() * (1.0 + c) <= 1.0 + c * fringe) return o;
    }
    throw numerical_error("sample_counting: rejection sampling stalled");
  }

 private:
  Scheme scheme_;
  ProbeKind kind_;
  double alpha_;
  ChannelParams ch_;
  double norm_ecs_;
};

// ---- classical Fisher information --------------------------------------------

/// Numerically integrated Fisher information of the outcome distribution.
inline double classical_fisher_info(Scheme scheme, ProbeKind kind, double phi,
                                    double alpha, const ChannelParams& ch = {},
                                    int panels_per_unit = 48) {
  OutcomeModel model(scheme, kind, alpha, ch);
  if (scheme == Scheme::counting) {
    const int cut = model.count_cutoff();
    double info = 0.0;
    for (int m = 0; m <= cut; ++m)
      for (int n = 0; n + m <= cut; ++n) {
        CountingOutcome o{m, n, 0};
        if (kind == ProbeKind::qwp) {
          for (int q : {1, -1}) {
            o.qubit = q;
            const double p = model.mass(o, phi);
            if (p > 1e-300) info += sq(model.dlog_mass(o, phi)) * p;
          }
        } else {
          const double p = model.mass(o, phi);
          if (p > 1e-300) info += sq(model.dlog_mass(o, phi)) * p;
        }
      }
    return info;
  }

  // homodyne: composite 2-d quadrature over the displaced gaussian support
  const auto mu = detail::means(alpha, ch.loss, phi);
  const double half = 7.0 + std::sqrt(1.0 - ch.loss) * alpha;
  // panel density follows the fastest fringe (period ~ pi / alpha)
  const int per_axis =
      std::max(32, static_cast<int>(std::ceil((2.0 * half) * panels_per_unit *
                                              std::max(1.0, alpha) / 12.0)));
  static const quad::Rule rule = quad::gauss_legendre(8);
  auto fisher_point = [&](double xp, double xm) {
    HomodyneOutcome o{xp, xm, 0};
    double acc = 0.0;
    if (kind == ProbeKind::qwp) {
      for (int q : {1, -1}) {
        o.qubit = q;
        const double p = model.density(o, phi);
        if (p > 1e-300) acc += sq(model.dlog_density(o, phi)) * p;
      }
    } else {
      const double p = model.density(o, phi);
      if (p > 1e-300) acc += sq(model.dlog_density(o, phi)) * p;
    }
    return acc;
  };
  const double ax = mu.mu_p - half, bx = mu.mu_p + half;
  const double ay = mu.mu_m - half, by = mu.mu_m + half;
  const double hx = (bx - ax) / per_axis, hy = (by - ay) / per_axis;
  double info = 0.0;
  for (int i = 0; i < per_axis; ++i) {
    for (std::size_t ki = 0; ki < rule.x.size(); ++ki) {
      const double x = ax + (i + 0.5 + 0.5 * rule.x[ki]) * hx;
      double row = 0.0;
      for (int j = 0; j < per_axis; ++j)
        for (std::size_t kj = 0; kj < rule.x.size(); ++kj) {
          const double y = ay + (j + 0.5 + 0.5 * rule.x[kj]) * hy;
          row += 0.25 * rule.w[ki] * rule.w[kj] * fisher_point(x, y);
        }
      info += row * hx * hy;
    }
  }
  return info;
}

// ---- maximum-likelihood estimation --------------------------------------------

struct MleResult {
  double estimate;
  double ci_halfwidth;   // from the observed information at the optimum
  bool multimodal;       // several near-degenerate likelihood peaks found
};

template <class Outcome>
MleResult mle_phase(const std::vector<Outcome>& samples, const OutcomeModel& model,
                    double window_lo, double window_hi, int grid_points = 240) {
  require(!samples.empty(), "mle_phase: no samples");
  require(window_hi > window_lo && window_lo > -pi - 1e-12 && window_hi <= pi + 1e-12,
          "mle_phase: window must lie inside (-pi, pi]");

  auto loglik = [&](double phi) {
    double acc = 0.0;
    for (const auto& o : samples) {
      double p;
      if constexpr (std::is_same_v<Outcome, HomodyneOutcome>)
        p = model.density(o, phi);
      else
        p = model.mass(o, phi);
      acc += std::log(std::max(p, 1e-300));
    }
    return acc;
  };

  // coarse grid scan
  std::vector<double> ll(grid_points);
  double best = -1e300;
  int best_idx = 0;
  for (int k = 0; k < grid_points; ++k) {
    const double phi = window_lo + (window_hi - window_lo) * k / (grid_points - 1.0);
    ll[k] = loglik(phi);
    if (ll[k] > best) {
      best = ll[k];
      best_idx = k;
    }
  }
  // detect additional near-degenerate local maxima
  bool multimodal = false;
  for (int k = 1; k + 1 < grid_points; ++k) {
    if (k != best_idx && ll[k] > ll[k - 1] && ll[k] > ll[k + 1] &&
        best - ll[k] < 0.05 * std::abs(best) + 2.0)
      multimodal = true;
  }

  // golden-section polish on the bracketing interval
  const double step = (window_hi - window_lo) / (grid_points - 1.0);
  double lo = std::max(window_lo, window_lo + (best_idx - 1) * step);
  double hi = std::min(window_hi, window_lo + (best_idx + 1) * step);
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = loglik(x1), f2 = loglik(x2);
  for (int it = 0; it < 80 && hi - lo > 1e-10; ++it) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = loglik(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = loglik(x1);
    }
  }
  MleResult r;
  r.estimate = 0.5 * (lo + hi);
  const double h = std::max(1e-5, 1e-3 * step);
  const double observed =
      -(loglik(r.estimate + h) - 2.0 * loglik(r.estimate) + loglik(r.estimate - h)) /
      (h * h);
  r.ci_halfwidth = observed > 0.0 ? 1.0 / std::sqrt(observed)
                                  : std::numeric_limits<double>::infinity();
  r.multimodal = multimodal;
  return r;
}

// ---- precision bounds ------------------------------------------------------------

struct PrecisionBound {
  double delta_phi;      // Cramer-Rao bound for M repetitions
  double delta_phi_sql;  // shot-noise reference at the same resources
};

inline PrecisionBound precision_bound(double fisher_info, int repetitions,
                                      double loss, double nbar) {
  require(repetitions >= 1, "precision_bound: need at least one repetition");
  require(fisher_info >= 0.0, "precision_bound: negative information");
  PrecisionBound b;
  b.delta_phi = fisher_info > 0.0
                    ? 1.0 / std::sqrt(repetitions * fisher_info)
                    : std::numeric_limits<double>::infinity();
  const double denom = (1.0 - loss) * repetitions * nbar;
  b.delta_phi_sql = denom > 0.0 ? 1.0 / std::sqrt(denom)
                                : std::numeric_limits<double>::infinity();
  return b;
}

}  // namespace cavkit::metrology
