#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "cavkit/common.hpp"
#include "cavkit/qcore.hpp"
#include "cavkit/quad.hpp"

namespace cavkit::flyingcat {

enum class CheckBasis { z, x };

/// Configuration of a weight-3 parity check carried by a coherent pulse, with
/// per-link loss reflectivities eta[i] after the i-th qubit interaction.
struct CheckConfig {
  double alpha = 1.0;                 // input amplitude (real, > 0)
  std::array<double, 3> eta{0, 0, 0}; // link losses
  CheckBasis basis = CheckBasis::z;

  void check() const {
    require(alpha > 0.0, "CheckConfig: amplitude must be positive");
    for (double e : eta)
      require(e >= 0.0 && e <= 1.0, "CheckConfig: loss out of range");
  }

  /// Amplitude surviving to the detector.
  double alpha_bar() const {
    double a = alpha;
    for (double e : eta) a *= std::sqrt(1.0 - e);
    return a;
  }

  /// Amplitude diverted into loss mode i (0-based).
  double alpha_lost(int i) const {
    double a = alpha * std::sqrt(eta[i]);
    for (int j = 0; j < i; ++j) a *= std::sqrt(1.0 - eta[j]);
    return a;
  }

  /// Backaction error probabilities of the two dephasing channels.
  double p1() const { return 0.5 * (1.0 - std::exp(-2.0 * sq(alpha_lost(0)))); }
  double p2() const { return 0.5 * (1.0 - std::exp(-2.0 * sq(alpha_lost(1)))); }

  /// Parity-inference error of the thresholded field measurement.
  double p_measure() const { return 0.5 * std::erfc(std::sqrt(2.0) * alpha_bar()); }
};

struct LossAmplitudes {
  double alpha_bar;
  std::array<double, 3> alpha_lost;
};

inline LossAmplitudes loss_amplitudes(double alpha, const std::array<double, 3>& eta) {
  CheckConfig cfg;
  cfg.alpha = alpha;
  cfg.eta = eta;
  cfg.check();
  return {cfg.alpha_bar(), {cfg.alpha_lost(0), cfg.alpha_lost(1), cfg.alpha_lost(2)}};
}

// ---- the parity-check channel ---------------------------------------------------

/// Joint state of three qubits and the travelling field, represented in the
/// two-element coherent frame {|+alpha_bar>, |-alpha_bar>}: entries[(s,f),(s',f')]
/// is the coefficient of |s><s'| (x) |f alpha_bar><f' alpha_bar| with
/// f, f' in {+1, -1}. The frame is nonorthogonal with overlap
/// <alpha_bar|-alpha_bar> = exp(-2 alpha_bar^2).
struct JointState {
  Mat entries;  // 16 x 16, indexed by 2*s + (f == -1)
  double alpha_bar = 0.0;

  static int index(int s, int f) { return 2 * s + (f < 0 ? 1 : 0); }

  double frame_overlap() const { return std::exp(-2.0 * sq(alpha_bar)); }

  /// Trace, accounting for the nonorthogonal frame metric.
  double trace() const {
    double tr = 0.0;
    for (int s = 0; s < 8; ++s)
      for (int f : {1, -1})
        for (int fp : {1, -1}) {
          // Tr |f a><f' a| = <f' a| f a>
          const double metric = (f == fp) ? 1.0 : frame_overlap();
          tr += std::real(entries(index(s, f), index(s, fp))) * metric;
        }
    return tr;
  }
};

namespace detail {
inline int parity3(int s) {
  return ((s >> 0) ^ (s >> 1) ^ (s >> 2)) & 1;  // 0 even, 1 odd
}
inline Mat hadamard3() {
  Mat h1(2, 2);
  h1 << 1, 1, 1, -1;
  h1 /= std::sqrt(2.0);
  return kron(kron(h1, h1), h1);
}
}  // namespace detail

/// Apply the lossy parity check to a three-qubit input. The diagonal field
/// blocks realize the composition of the two backaction dephasing channels
/// and the off-diagonal blocks carry the loss-suppressed parity coherence.
inline JointState parity_check_channel(const qcore::DensityOp& state,
                                       const CheckConfig& cfg) {
  cfg.check();
  require(state.dims() == qcore::Dims({2, 2, 2}),
          "parity_check_channel: need a three-qubit input");
  Mat rho = state.matrix();
  if (cfg.basis == CheckBasis::x) {
    static const Mat h = detail::hadamard3();
    rho = (h * rho * h).eval();
  }

  // suppression exponents per loss mode: the branch with bit pattern s leaves
  // record (-1)^{b_i(s)} in loss mode i
  auto record = [](int s, int i) {
    if (i == 0) return (s >> 2) & 1;                      // first qubit
    if (i == 1) return ((s >> 2) ^ (s >> 1)) & 1;         // first two qubits
    return detail::parity3(s);                            // total parity
  };
  // bit order: s = 4*s1 + 2*s2 + s3

  JointState out;
  out.alpha_bar = cfg.alpha_bar();
  out.entries = Mat::Zero(16, 16);
  for (int s = 0; s < 8; ++s)
    for (int sp = 0; sp < 8; ++sp) {
      double damp = 1.0;
      for (int i = 0; i < 3; ++i)
        if (record(s, i) != record(sp, i)) damp *= std::exp(-2.0 * sq(cfg.alpha_lost(i)));
      const int f = detail::parity3(s) == 0 ? 1 : -1;
      const int fp = detail::parity3(sp) == 0 ? 1 : -1;
      out.entries(JointState::index(s, f), JointState::index(sp, fp)) =
          rho(s, sp) * damp;
    }
  if (cfg.basis == CheckBasis::x) {
    // closing Hadamards rotate the qubit part while the field keeps its
    // correlation with the X parity
    static const Mat h = detail::hadamard3();
    Mat rotated = Mat::Zero(16, 16);
    for (int f : {1, -1})
      for (int fp : {1, -1}) {
        Mat block(8, 8);
        for (int s = 0; s < 8; ++s)
          for (int sp = 0; sp < 8; ++sp)
            block(s, sp) = out.entries(JointState::index(s, f),
                                       JointState::index(sp, fp));
        block = (h * block * h).eval();
        for (int s = 0; s < 8; ++s)
          for (int sp = 0; sp < 8; ++sp)
            rotated(JointState::index(s, f), JointState::index(sp, fp)) =
                block(s, sp);
      }
    out.entries = std::move(rotated);
  }
  return out;
}

/// Independent construction routing the pulse through explicit beam splitters:
/// track per-branch loss-mode amplitudes and trace via coherent overlaps.
inline JointState parity_check_loss_mode_oracle(const qcore::DensityOp& state,
                                                const CheckConfig& cfg) {
  cfg.check();
  Mat rho = state.matrix();
  if (cfg.basis == CheckBasis::x) {
    static const Mat h = detail::hadamard3();
    rho = (h * rho * h).eval();
  }

  // branch amplitudes: walk the pulse through qubit flips and beam splitters
  struct Branch {
    double field;                 // surviving amplitude (signed)
    std::array<double, 3> lost;   // loss-mode amplitudes (signed)
  };
  std::array<Branch, 8> branch{};
  for (int s = 0; s < 8; ++s) {
    double a = cfg.alpha;
    std::array<int, 3> bits{(s >> 2) & 1, (s >> 1) & 1, s & 1};
    for (int i = 0; i < 3; ++i) {
      if (bits[i]) a = -a;                       // conditional sign flip
      branch[s].lost[i] = a * std::sqrt(cfg.eta[i]);
      a *= std::sqrt(1.0 - cfg.eta[i]);
    }
    branch[s].field = a;
  }

  auto overlap = [](double b, double bp) {
    // <bp|b> for real coherent amplitudes
    return std::exp(-0.5 * b * b - 0.5 * bp * bp + bp * b);
  };

  JointState out;
  out.alpha_bar = cfg.alpha_bar();
  out.entries = Mat::Zero(16, 16);
  for (int s = 0; s < 8; ++s)
    for (int sp = 0; sp < 8; ++sp) {
      double env = 1.0;
      for (int i = 0; i < 3; ++i)
        env *= overlap(branch[s].lost[i], branch[sp].lost[i]);
      const int f = branch[s].field > 0 ? 1 : -1;
      const int fp = branch[sp].field > 0 ? 1 : -1;
      out.entries(JointState::index(s, f), JointState::index(sp, fp)) =
          rho(s, sp) * env;
    }
  if (cfg.basis == CheckBasis::x) {
    static const Mat h = detail::hadamard3();
    Mat rotated = Mat::Zero(16, 16);
    for (int f : {1, -1})
      for (int fp : {1, -1}) {
        Mat block(8, 8);
        for (int s = 0; s < 8; ++s)
          for (int sp = 0; sp < 8; ++sp)
            block(s, sp) = out.entries(JointState::index(s, f),
                                       JointState::index(sp, fp));
        block = (h * block * h).eval();
        for (int s = 0; s < 8; ++s)
          for (int sp = 0; sp < 8; ++sp)
            rotated(JointState::index(s, f), JointState::index(sp, fp)) =
                block(s, sp);
      }
    out.entries = std::move(rotated);
  }
  return out;
}

// ---- field measurement -------------------------------------------------------------

struct MeasurementResult {
  double prob_even;                  // probability of inferring even parity
  double prob_odd;
  qcore::DensityOp post_even;        // three-qubit state given inference "+"
  qcore::DensityOp post_odd;
  double joint_error_even;           // P("+", odd)
  double joint_error_odd;            // P("-", even)
  double p_measure;                  // total inference error
};

/// Threshold the field quadrature at x = threshold and collapse the qubits.
/// The quadrature overlap integrals with the displaced frame states are
/// evaluated in closed form.
inline MeasurementResult homodyne_parity_measurement(const JointState& joint,
                                                     double threshold = 0.0) {
  const double ab = joint.alpha_bar;
  // int_T^inf <x|f a><f' a|x> dx for the two-element frame
  auto halfline = [&](int f, int fp, bool upper) {
    const double mu = std::sqrt(2.0) * ab;
    if (f == fp) {
      const double edge = (threshold - f * mu);
      return upper ? 0.5 * std::erfc(edge) : 0.5 * (1.0 + std::erf(edge));
    }
    // cross term: gaussian centred at zero times the frame overlap
    const double base = std::exp(-2.0 * ab * ab);
    const double w = upper ? 0.5 * std::erfc(threshold) : 0.5 * (1.0 + std::erf(threshold));
    return base * w;
  };

  auto collapse = [&](bool upper) {
    Mat rho = Mat::Zero(8, 8);
    double prob = 0.0;
    for (int s = 0; s < 8; ++s)
      for (int sp = 0; sp < 8; ++sp) {
        cxd acc = 0.0;
        for (int f : {1, -1})
          for (int fp : {1, -1})
            acc += joint.entries(JointState::index(s, f), JointState::index(sp, fp)) *
                   halfline(f, fp, upper);
        rho(s, sp) = acc;
        if (s == sp) prob += std::real(acc);
      }
    Mat scaled = rho / prob;
    return std::make_pair(std::move(scaled), prob);
  };

  auto [rho_even, p_even] = collapse(true);
  auto [rho_odd, p_odd] = collapse(false);

  auto parity_weight = [](const Mat& rho, int parity) {
    double w = 0.0;
    for (int s = 0; s < 8; ++s)
      if (detail::parity3(s) == parity) w += std::real(rho(s, s));
    return w;
  };

  MeasurementResult r{p_even,
                      p_odd,
                      qcore::DensityOp(qcore::Dims({2, 2, 2}), rho_even),
                      qcore::DensityOp(qcore::Dims({2, 2, 2}), rho_odd),
                      p_even * parity_weight(rho_even, 1),
                      p_odd * parity_weight(rho_odd, 0),
                      0.0};
  r.p_measure = r.joint_error_even + r.joint_error_odd;
  return r;
}

// ---- error trade-off -----------------------------------------------------------------

struct TradeOff {
  std::function<double(double)> total_error;  // p_tot(alpha)
  double alpha_opt;
  double p_opt;
  bool interior_minimum;
};

/// Exact total error (inference + backaction) and its minimizer over the
/// amplitude bracket [0.1, 10].
inline TradeOff total_error(double eta1, double eta2) {
  require(eta1 >= 0.0 && eta1 < 1.0 && eta2 >= 0.0 && eta2 < 1.0,
          "total_error: losses must lie in [0, 1)");
  auto ptot = [eta1, eta2](double alpha) {
    CheckConfig cfg;
    cfg.alpha = alpha;
    cfg.eta = {eta1, eta2, 0.0};
    return cfg.p_measure() + cfg.p1() + cfg.p2();
  };
  double lo = 0.1, hi = 10.0;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = ptot(x1), f2 = ptot(x2);
  while (hi - lo > 1e-6) {
    if (f1 > f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = ptot(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = ptot(x1);
    }
  }
  TradeOff t;
  t.total_error = ptot;
  t.alpha_opt = 0.5 * (lo + hi);
  t.p_opt = ptot(t.alpha_opt);
  t.interior_minimum = t.p_opt < std::min(ptot(0.1), ptot(10.0)) - 1e-15;
  return t;
}

// ---- entangled-state preparation --------------------------------------------------------

struct GhzResult {
  qcore::DensityOp state;  // three-qubit mixed state
  double total_error;      // weight outside the target state
};

/// Three-qubit entangled-state preparation from two weight-2 checks with
/// losses eta12 and eta23 on the inter-qubit links.
inline GhzResult ghz_prepare(double alpha, double eta12, double eta23) {
  require(alpha > 0.0, "ghz_prepare: amplitude must be positive");
  auto perr = [&](double eta) { return 0.5 * (1.0 - std::exp(-2.0 * eta * sq(alpha))); };
  auto qerr = [&](double eta) {
    return 0.5 * std::erfc(std::sqrt(2.0) * (1.0 - eta) * alpha);
  };
  const double p12 = perr(eta12), p23 = perr(eta23);
  const double q12 = qerr(eta12), q23 = qerr(eta23);
  const double p = p12 + p23 - p12 * p23 + q12 + q23 + q12 * q23;

  // target component plus an orthogonal error complement: the backaction and
  // wrong-correction channels flip Z or X on the affected qubits, all of which
  // move the target to orthogonal states
  Vec ghz = Vec::Zero(8);
  ghz(0) = ghz(7) = 1.0 / std::sqrt(2.0);
  Mat rho = (1.0 - p) * (ghz * ghz.adjoint());

  // distribute the error weight over orthogonal flip patterns reached by the
  // individual error mechanisms (the simultaneous Z2 Z3 pattern stabilizes
  // the target and is excluded)
  struct Term {
    int zmask;  // Z flips (phase pattern)
    int xmask;  // X flips (bit pattern)
    double w;
  };
  std::vector<Term> terms = {
      {2, 0, p12},            // backaction of the first check
      {1, 0, p23},            // backaction of the second check
      {0, 4, q12},            // wrong correction after a misread first check
      {0, 1, q23},            // wrong correction after a misread second check
      {0, 5, q12 * q23},      // both checks misread
  };
  // normalize the listed weights to the composed total error
  double wsum = 0.0;
  for (auto& t : terms) wsum += t.w;
  for (auto& t : terms) t.w *= p / wsum;
  for (const auto& t : terms) {
    Vec v = Vec::Zero(8);
    for (int s = 0; s < 8; ++s) {
      if ((s == 0 || s == 7)) {
        const int flipped = s ^ t.xmask;
        double sign = 1.0;
        for (int b = 0; b < 3; ++b)
          if ((t.zmask >> b) & 1 && (s >> b) & 1) sign = -sign;
        v(flipped) += sign * ghz(s);
      }
    }
    v /= v.norm();
    rho += t.w * (v * v.adjoint());
  }
  return {qcore::DensityOp(qcore::Dims({2, 2, 2}), rho), p};
}

// ---- feasibility -----------------------------------------------------------------------

struct FeasibilityParams {
  double chi;        // dispersive shift
  double kappa0;     // port coupling
  double kappa_int;  // internal loss
  double tau;        // pulse duration
  double t2star;     // qubit dephasing time
  double eta_trans = 0.0;
  double eta_circ = 0.0;
};

struct FeasibilityResult {
  double eps_reflect_exact;      // frequency-quadrature infidelity
  double eps_reflect_approx;     // leading-order estimate
  double bandwidth_term;         // alpha^2 / (2 tau^2 chi^2)
  double internal_term;          // alpha^2 kappa_int^2 / (4 chi^2)
  double eps_qubit;              // tau / T2*
  double eta_total;              // summed transmission losses
};

/// Infidelity budget of the conditioned-phase reflection at the matched
/// operating point |chi| = kappa0 / 2, for a Gaussian pulse of duration tau.
inline FeasibilityResult feasibility(const FeasibilityParams& fp, double alpha) {
  require(fp.kappa0 > 0.0 && fp.tau > 0.0 && fp.t2star > 0.0,
          "feasibility: rates and times must be positive");
  FeasibilityResult r;
  const double chi2 = sq(fp.chi);
  r.bandwidth_term = sq(alpha) / (2.0 * sq(fp.tau) * chi2);
  r.internal_term = sq(alpha) * sq(fp.kappa_int) / (4.0 * chi2);
  r.eps_reflect_approx = r.bandwidth_term + r.internal_term;
  r.eps_qubit = fp.tau / fp.t2star;
  r.eta_total = fp.eta_trans + fp.eta_circ;

  // exact overlap of the reflected pulse with the ideal conditioned state
  auto reflect = [&](double w, int z) {
    const cxd det = 2.0 * iu * (w - double(z) * fp.chi);
    return (det + fp.kappa0 - fp.kappa_int) / (det - fp.kappa0 - fp.kappa_int);
  };
  const int zsign = fp.chi >= 0.0 ? 1 : -1;
  double avg = 0.0;
  for (int z : {1, -1}) {
    const cxd ideal = double(z * zsign) * iu;
    const double exponent =
        sq(alpha) *
        quad::integrate(
            [&](double w) {
              return 2.0 * std::sqrt(pi) * fp.tau * std::exp(-sq(w * fp.tau)) *
                     std::norm(ideal - reflect(w, z)) / (2.0 * pi);
            },
            -12.0 / fp.tau, 12.0 / fp.tau, 1e-10);
    avg += 0.5 * std::exp(-exponent);
  }
  r.eps_reflect_exact = 1.0 - avg;
  return r;
}

}  // namespace cavkit::flyingcat
