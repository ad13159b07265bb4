#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "cavkit/common.hpp"
#include "cavkit/qcore.hpp"
#include "cavkit/rng.hpp"

namespace cavkit::stabnet {

constexpr int n_qubits = 6;
constexpr int dim = 64;

/// Six-site Pauli word with an overall sign, stored in symplectic (x, z)
/// form. Each site carries X^x Z^z (so a site with both bits is X Z, which
/// differs from Y only by a global phase).
class PauliString {
 public:
  PauliString() = default;

  /// Parse e.g. "XIXZIX" (left to right = qubit 1..6) with optional leading
  /// '-' for the sign.
  static PauliString parse(const std::string& text) {
    PauliString p;
    std::size_t k = 0;
    if (!text.empty() && (text[0] == '+' || text[0] == '-')) {
      p.negative_ = text[0] == '-';
      k = 1;
    }
    require(text.size() - k == n_qubits, "PauliString: need six sites");
    for (int q = 0; q < n_qubits; ++q) {
      switch (text[k + q]) {
        case 'I': break;
        case 'X': p.x_ |= 1 << q; break;
        case 'Z': p.z_ |= 1 << q; break;
        case 'Y':
          p.x_ |= 1 << q;
          p.z_ |= 1 << q;
          break;
        default:
          throw std::invalid_argument("PauliString: bad site letter");
      }
    }
    return p;
  }

  static PauliString single(char letter, int qubit) {
    std::string s(n_qubits, 'I');
    s[qubit - 1] = letter;
    return parse(s);
  }

  bool commutes_with(const PauliString& o) const {
    return ((__builtin_popcount(x_ & o.z_) + __builtin_popcount(z_ & o.x_)) % 2) == 0;
  }

  /// Product this * other with the X^x Z^z ordering convention: reordering
  /// the Z factors of this word past the X factors of the other contributes
  /// (-1) per overlap.
  PauliString operator*(const PauliString& o) const {
    PauliString r;
    r.x_ = x_ ^ o.x_;
    r.z_ = z_ ^ o.z_;
    r.negative_ = negative_ != o.negative_;
    if (__builtin_popcount(z_ & o.x_) % 2) r.negative_ = !r.negative_;
    return r;
  }

  bool is_identity_word() const { return x_ == 0 && z_ == 0; }
  bool negative() const { return negative_; }
  int x_mask() const { return x_; }
  int z_mask() const { return z_; }

  bool operator==(const PauliString& o) const {
    return x_ == o.x_ && z_ == o.z_ && negative_ == o.negative_;
  }

  /// Dense 64 x 64 matrix (qubit 1 = most significant bit).
  Mat matrix() const {
    Mat m = Mat::Zero(dim, dim);
    for (int s = 0; s < dim; ++s) {
      int t = s;
      cxd amp = negative_ ? -1.0 : 1.0;
      for (int q = 0; q < n_qubits; ++q) {
        const int bitpos = n_qubits - 1 - q;  // qubit q+1 occupies this bit
        const int bit = (s >> bitpos) & 1;
        const bool fx = (x_ >> q) & 1, fz = (z_ >> q) & 1;
        if (fz && bit) amp = -amp;  // Z acts first
        if (fx) t ^= 1 << bitpos;
      }
      m(t, s) = amp;
    }
    return m;
  }

  std::string str() const {
    std::string out = negative_ ? "-" : "+";
    for (int q = 0; q < n_qubits; ++q) {
      const bool fx = (x_ >> q) & 1, fz = (z_ >> q) & 1;
      out += fx && fz ? 'W' : fx ? 'X' : fz ? 'Z' : 'I';
    }
    return out;
  }

 private:
  int x_ = 0;  // bit q set: X component on qubit q+1
  int z_ = 0;
  bool negative_ = false;
};

/// The six commuting checks: faces carry the z-type words, vertices the
/// x-type words.
inline const std::array<PauliString, 6>& stabilizers() {
  static const std::array<PauliString, 6> s = {
      PauliString::parse("ZIZIZI"),  // S1 = Z1 Z3 Z5
      PauliString::parse("ZIIZIZ"),  // S2 = Z1 Z4 Z6
      PauliString::parse("IZIZZI"),  // S3 = Z2 Z4 Z5
      PauliString::parse("XIXIIX"),  // S4 = X1 X3 X6
      PauliString::parse("XIIXXI"),  // S5 = X1 X4 X5
      PauliString::parse("IXXIXI"),  // S6 = X2 X3 X5
  };
  return s;
}

/// The unique simultaneous +1 eigenstate: an equal superposition of the four
/// tripled two-qubit Bell states on the pairs (1,2), (3,4), (5,6).
inline qcore::PureState tetrahedron_state() {
  using qcore::Dims;
  Vec bell[4];
  auto mk = [](std::initializer_list<cxd> v) {
    Vec b(4);
    int k = 0;
    for (cxd c : v) b(k++) = c;
    return b;
  };
  const double r = 1.0 / std::sqrt(2.0);
  bell[0] = mk({r, 0, 0, r});    // phi+
  bell[1] = mk({r, 0, 0, -r});   // phi-
  bell[2] = mk({0, r, r, 0});    // psi+
  bell[3] = mk({0, r, -r, 0});   // psi-

  Vec t = Vec::Zero(dim);
  for (int b = 0; b < 4; ++b) {
    Vec v = bell[b];
    Vec vv(16);
    for (int i = 0; i < 4; ++i) vv.segment(i * 4, 4) = v(i) * v;
    Vec vvv(dim);
    for (int i = 0; i < 16; ++i) vvv.segment(i * 4, 4) = vv(i) * v;
    t += vvv;
  }
  t *= 0.5;
  return qcore::PureState(Dims{2, 2, 2, 2, 2, 2}, t);
}

// ---- measurement ------------------------------------------------------------

struct MeasureNoise {
  double flip = 0.0;  // reported-outcome flip probability
  double p1 = 0.0;    // two-site backaction error probability
  double p2 = 0.0;    // single-site backaction error probability
};

struct MeasureRecord {
  int reported;  // +1 / -1
  int actual;    // the projective outcome before readout errors
};

/// Projective measurement of a Pauli word with optional readout flip and
/// post-measurement backaction errors on the check's second and third sites.
/// `sites` lists the three acted qubits in interaction order (1-based).
inline MeasureRecord measure_pauli(Vec& state, const PauliString& word,
                                   const std::array<int, 3>& sites,
                                   const MeasureNoise& noise, RandomStream& rng) {
  require((word.x_mask() & word.z_mask()) == 0,
          "measure_pauli: need a Hermitian x- or z-type word");
  const Mat m = word.matrix();
  Vec up = 0.5 * (state + m * state);
  const double p_up = up.squaredNorm();
  MeasureRecord rec{};
  if (rng.uniform() < p_up) {
    rec.actual = 1;
    state = up / std::sqrt(p_up);
  } else {
    Vec down = state - up;
    rec.actual = -1;
    state = down / down.norm();
  }
  rec.reported = rng.bernoulli(noise.flip) ? -rec.actual : rec.actual;

  // backaction: dephasing-type errors in the same basis as the check
  const bool xtype = word.z_mask() == 0;
  const char letter = xtype ? 'X' : 'Z';
  if (rng.bernoulli(noise.p1)) {
    const Mat e = (PauliString::single(letter, sites[1]) *
                   PauliString::single(letter, sites[2]))
                      .matrix();
    state = e * state;
  }
  if (rng.bernoulli(noise.p2)) {
    state = PauliString::single(letter, sites[2]).matrix() * state;
  }
  return rec;
}

// ---- decoding -----------------------------------------------------------------

enum class ErrorType { x, z };

/// Correction for one syndrome half. The tables cover the six single-site
/// patterns; the all-minus pattern maps to a fixed pair (1,2); all-plus is
/// the identity. X corrections are decoded from the z-check half and vice
/// versa, and the two halves see different per-qubit patterns because the
/// face and vertex checks touch different site triples.
inline PauliString decode(const std::array<int, 3>& syndrome, ErrorType type) {
  for (int v : syndrome) require(v == 1 || v == -1, "decode: entries must be +-1");
  const char letter = type == ErrorType::x ? 'X' : 'Z';
  struct Row {
    std::array<int, 3> pattern;
    int qubit;
  };
  static const std::array<Row, 6> x_table = {{
      {{-1, -1, +1}, 1},
      {{+1, +1, -1}, 2},
      {{-1, +1, +1}, 3},
      {{+1, -1, -1}, 4},
      {{-1, +1, -1}, 5},
      {{+1, -1, +1}, 6},
  }};
  static const std::array<Row, 6> z_table = {{
      {{-1, -1, +1}, 1},
      {{+1, +1, -1}, 2},
      {{-1, +1, -1}, 3},
      {{+1, -1, +1}, 4},
      {{+1, -1, -1}, 5},
      {{-1, +1, +1}, 6},
  }};
  if (syndrome == std::array<int, 3>{1, 1, 1}) return PauliString();
  if (syndrome == std::array<int, 3>{-1, -1, -1})
    return PauliString::single(letter, 1) * PauliString::single(letter, 2);
  const auto& table = type == ErrorType::x ? x_table : z_table;
  for (const Row& row : table)
    if (syndrome == row.pattern) return PauliString::single(letter, row.qubit);
  throw std::logic_error("decode: unreachable syndrome");
}

/// Syndrome of a Pauli error word as seen by the six checks.
inline std::array<int, 6> syndrome_of(const PauliString& error) {
  std::array<int, 6> s{};
  for (int i = 0; i < 6; ++i) {
    const auto& check = stabilizers()[i];
    const int anti = (__builtin_popcount(check.x_mask() & error.z_mask()) +
                      __builtin_popcount(check.z_mask() & error.x_mask())) %
                     2;
    s[i] = anti ? -1 : 1;
  }
  return s;
}

/// True when the word acts trivially on the stabilized state (it is a product
/// of checks, up to sign).
inline bool stabilizes_target(const PauliString& p) {
  if (p.is_identity_word()) return true;
  // search the 64 products of checks for a matching word
  for (int mask = 1; mask < 64; ++mask) {
    PauliString prod;
    for (int i = 0; i < 6; ++i)
      if ((mask >> i) & 1) prod = prod * stabilizers()[i];
    if (prod.x_mask() == p.x_mask() && prod.z_mask() == p.z_mask()) return true;
  }
  return false;
}

// ---- preparation -----------------------------------------------------------------

struct PrepResult {
  Vec state;
  std::array<int, 6> reported;
  PauliString correction;
};

/// Interaction order of each check (matching the site order of its word).
inline std::array<int, 3> check_sites(int i) {
  static const std::array<std::array<int, 3>, 6> sites = {{
      {1, 3, 5}, {1, 4, 6}, {2, 4, 5}, {1, 3, 6}, {1, 4, 5}, {2, 3, 5},
  }};
  return sites[i];
}

/// Measure the six checks (x-type first, then z-type), decode the reported
/// outcomes, and apply the corrections. Backaction from the final z round
/// remains uncorrected.
inline PrepResult prepare_tetrahedron(const Vec& initial, const MeasureNoise& noise,
                                      RandomStream& rng) {
  require(initial.size() == dim, "prepare_tetrahedron: need a six-qubit state");
  PrepResult out;
  out.state = initial / initial.norm();

  const std::array<int, 6> order = {3, 4, 5, 0, 1, 2};  // x checks, then z
  for (int i : order) {
    auto rec = measure_pauli(out.state, stabilizers()[i], check_sites(i), noise, rng);
    out.reported[i] = rec.reported;
  }
  const PauliString cx =
      decode({out.reported[0], out.reported[1], out.reported[2]}, ErrorType::x);
  const PauliString cz =
      decode({out.reported[3], out.reported[4], out.reported[5]}, ErrorType::z);
  out.correction = cx * cz;
  out.state = (out.correction.matrix() * out.state).eval();
  return out;
}

// ---- witnesses --------------------------------------------------------------------

struct WitnessValues {
  double projector;    // 1/2 - target overlap
  double two_setting;  // stabilizer-average form
  double fidelity;     // recovered from the projector form
};

inline WitnessValues witness(const qcore::DensityOp& rho) {
  require(rho.dim() == dim, "witness: need a six-qubit state");
  const Vec t = tetrahedron_state().amplitudes();
  const double overlap = std::real(t.dot(rho.matrix() * t));

  auto projector_sum = [&](int lo) {
    Mat acc = Mat::Zero(dim, dim);
    for (int mask = 0; mask < 8; ++mask) {
      PauliString prod;
      for (int b = 0; b < 3; ++b)
        if ((mask >> b) & 1) prod = prod * stabilizers()[lo + b];
      acc += prod.matrix();
    }
    return (acc / 8.0).eval();
  };
  const double pz = std::real((projector_sum(0) * rho.matrix()).trace());
  const double px = std::real((projector_sum(3) * rho.matrix()).trace());

  WitnessValues w;
  w.projector = 0.5 - overlap;
  w.two_setting = 1.5 - pz - px;
  w.fidelity = overlap;
  return w;
}

/// Leading-order witness estimate from the error probabilities of the checks.
inline double witness_estimate(double p_measure, double p1, double p2) {
  return -0.5 + (1.0 - std::pow(1.0 - p_measure, 6)) + 3.0 * (p1 + p2);
}

// ---- controlled teleportation -------------------------------------------------------

struct TeleportInput {
  cxd a, b, c, d;  // coefficients on (phi+, psi+, psi-, phi-)

  void check() const {
    const double n = std::norm(a) + std::norm(b) + std::norm(c) + std::norm(d);
    require(std::abs(n - 1.0) < 1e-9, "TeleportInput: not normalized");
  }
};

struct TeleportOutcome {
  double fidelity;
  std::array<int, 2> alice;    // Bell outcomes (0..3) on the two measured pairs
  std::array<int, 2> charlie;  // z and x outcomes (only if cooperating)
  bool cooperated;
};

namespace detail {
inline Vec bell_vec(int which) {
  Vec b = Vec::Zero(4);
  const double r = 1.0 / std::sqrt(2.0);
  switch (which) {
    case 0: b(0) = r; b(3) = r; break;    // phi+
    case 1: b(1) = r; b(2) = r; break;    // psi+
    case 2: b(1) = r; b(2) = -r; break;   // psi-
    case 3: b(0) = r; b(3) = -r; break;   // phi-
  }
  return b;
}

// dense two-qubit gate applied to qubits (q1, q2) of an n-qubit state;
// qubit 1 is the most significant bit
inline void apply_two(Vec& state, const Mat& gate, int q1, int q2, int n) {
  const int p1 = n - q1, p2 = n - q2;
  for (int s = 0; s < (1 << n); ++s) {
    if (((s >> p1) & 1) || ((s >> p2) & 1)) continue;
    std::array<int, 4> idx;
    for (int k = 0; k < 4; ++k)
      idx[k] = s | (((k >> 1) & 1) << p1) | ((k & 1) << p2);
    Eigen::Vector4cd v;
    for (int k = 0; k < 4; ++k) v(k) = state(idx[k]);
    v = gate * v;
    for (int k = 0; k < 4; ++k) state(idx[k]) = v(k);
  }
}

inline void apply_one(Vec& state, const Mat& gate, int q, int n) {
  const int p = n - q;
  for (int s = 0; s < (1 << n); ++s) {
    if ((s >> p) & 1) continue;
    const int s1 = s | (1 << p);
    const cxd a = state(s), b = state(s1);
    state(s) = gate(0, 0) * a + gate(0, 1) * b;
    state(s1) = gate(1, 0) * a + gate(1, 1) * b;
  }
}
}  // namespace detail

/// One run of the two-qubit teleportation protocol on the shared resource
/// state. Alice holds the input pair plus qubits (1,2); Bob holds (3,4);
/// Charlie holds (5,6). Returns the fidelity of Bob's final pair.
inline TeleportOutcome controlled_teleport(const TeleportInput& input, bool cooperate,
                                           RandomStream& rng,
                                           std::optional<std::array<int, 2>> forced_alice =
                                               std::nullopt,
                                           std::optional<std::array<int, 2>> forced_charlie =
                                               std::nullopt) {
  input.check();
  // full register: A1 A2 1 2 3 4 5 6  (8 qubits)
  const int n = 8;
  Vec psi_in = Vec::Zero(4);
  psi_in += input.a * detail::bell_vec(0);
  psi_in += input.b * detail::bell_vec(1);
  psi_in += input.c * detail::bell_vec(2);
  psi_in += input.d * detail::bell_vec(3);

  const Vec t = tetrahedron_state().amplitudes();
  Vec state(1 << n);
  for (int i = 0; i < 4; ++i) state.segment(i * dim, dim) = psi_in(i) * t;

  // Bell measurement on a pair of qubits (1-based indices in the register)
  auto bell_measure = [&](int qa, int qb, std::optional<int> forced) {
    std::array<double, 4> probs{};
    std::array<Vec, 4> projected;
    for (int out = 0; out < 4; ++out) {
      const Vec b = detail::bell_vec(out);
      Mat proj = b * b.adjoint();
      Vec trial = state;
      detail::apply_two(trial, proj, qa, qb, n);
      projected[out] = trial;
      probs[out] = trial.squaredNorm();
    }
    int pick;
    if (forced) {
      pick = *forced;
      require(probs[pick] > 1e-18, "bell_measure: forced outcome has no weight");
    } else {
      double u = rng.uniform();
      pick = 3;
      for (int out = 0; out < 4; ++out) {
        if (u < probs[out]) {
          pick = out;
          break;
        }
        u -= probs[out];
      }
    }
    state = projected[pick] / std::sqrt(probs[pick]);
    return pick;
  };

  TeleportOutcome out{};
  out.cooperated = cooperate;
  out.alice[0] = bell_measure(1, 3, forced_alice ? std::optional<int>((*forced_alice)[0])
                                                 : std::nullopt);
  out.alice[1] = bell_measure(2, 4, forced_alice ? std::optional<int>((*forced_alice)[1])
                                                 : std::nullopt);

  // corrections on Bob's qubits (5 and 6 in the register = tetrahedron 3, 4)
  auto apply_single = [&](const Mat& gate, int q) { detail::apply_one(state, gate, q, n); };
  Mat X(2, 2), Z(2, 2);
  X << 0, 1, 1, 0;
  Z << 1, 0, 0, -1;
  auto corr = [&](int outcome, int qubit) {
    if (outcome == 1) apply_single(X, qubit);
    if (outcome == 3) apply_single(Z, qubit);
    if (outcome == 2) {
      apply_single(X, qubit);
      apply_single(Z, qubit);
    }
  };
  corr(out.alice[0], 5);
  corr(out.alice[1], 6);

  if (cooperate) {
    // Charlie: z-basis readout on register qubit 7, x-basis on qubit 8
    auto measure_single = [&](int q, const Mat& basis_rot, std::optional<int> forced) {
      Vec work = state;
      if (basis_rot.size() > 0) detail::apply_one(work, basis_rot, q, n);
      const int bit = n - q;
      double p0 = 0.0;
      for (int s = 0; s < (1 << n); ++s)
        if (!((s >> bit) & 1)) p0 += std::norm(work(s));
      const int pick = forced ? *forced : (rng.uniform() < p0 ? 0 : 1);
      for (int s = 0; s < (1 << n); ++s)
        if (((s >> bit) & 1) != pick) work(s) = 0.0;
      const double norm = work.norm();
      require(norm > 1e-12, "measure_single: forced outcome has no weight");
      state = work / norm;
      return pick;
    };
    Mat H(2, 2);
    H << 1, 1, 1, -1;
    H /= std::sqrt(2.0);
    out.charlie[0] = measure_single(7, Mat(), forced_charlie
                                                  ? std::optional<int>((*forced_charlie)[0])
                                                  : std::nullopt);
    out.charlie[1] = measure_single(8, H, forced_charlie
                                              ? std::optional<int>((*forced_charlie)[1])
                                              : std::nullopt);
    // conditional corrections from Charlie's outcomes
    if (out.charlie[0] == 1) {
      apply_single(X, 5);
      apply_single(X, 6);
    }
    if (out.charlie[1] == 1) {
      apply_single(Z, 5);
      apply_single(Z, 6);
    }
  }

  // fidelity of Bob's pair (register qubits 5, 6) with the input: sum of
  // squared projections over the non-Bob registers
  const int pos_hi = n - 5;  // bit position of Bob's first qubit
  double fid = 0.0;
  for (int hi = 0; hi < 16; ++hi)
    for (int lo = 0; lo < 4; ++lo) {
      cxd amp = 0.0;
      for (int b = 0; b < 4; ++b) {
        const int idx = (hi << 4) | (b << (pos_hi - 1)) | lo;
        amp += std::conj(psi_in(b)) * state(idx);
      }
      fid += std::norm(amp);
    }
  out.fidelity = fid;
  return out;
}

struct AverageFidelity {
  double mean;
  double stderr_mean;
};

/// Haar-averaged teleportation fidelity over random input pairs.
inline AverageFidelity average_fidelity(int samples, bool cooperate,
                                        std::uint64_t seed) {
  RandomStream rng(seed, "teleport");
  double acc = 0.0, acc2 = 0.0;
  for (int k = 0; k < samples; ++k) {
    Vec v = haar_state(4, rng);
    TeleportInput in{v(0), v(1), v(2), v(3)};
    const double f = controlled_teleport(in, cooperate, rng).fidelity;
    acc += f;
    acc2 += f * f;
  }
  const double mean = acc / samples;
  const double var = acc2 / samples - mean * mean;
  return {mean, std::sqrt(std::max(0.0, var) / samples)};
}

/// Exact Haar average of the non-cooperative fidelity from the quartic
/// moments of the coefficient vector.
inline double average_fidelity_exact_noncooperative() {
  // fidelity for fixed coefficients is sum |c_i|^4; its Haar average over a
  // 4-dimensional state space is 4 * 2/(4*5)
  return 4.0 * 2.0 / (4.0 * 5.0);
}

}  // namespace cavkit::stabnet
