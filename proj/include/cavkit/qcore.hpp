#pragma once

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "cavkit/common.hpp"

namespace cavkit::qcore {

/// Ordered subsystem sizes of a composite Hilbert space.
class Dims {
 public:
  Dims() = default;
  Dims(std::initializer_list<int> sizes) : sizes_(sizes) { check(); }
  explicit Dims(std::vector<int> sizes) : sizes_(std::move(sizes)) { check(); }

  int total() const {
    int n = 1;
    for (int s : sizes_) n *= s;
    return n;
  }
  int subsystems() const { return static_cast<int>(sizes_.size()); }
  int operator[](int i) const { return sizes_.at(i); }
  const std::vector<int>& sizes() const { return sizes_; }
  bool operator==(const Dims& o) const { return sizes_ == o.sizes_; }

  Dims concat(const Dims& o) const {
    std::vector<int> s = sizes_;
    s.insert(s.end(), o.sizes_.begin(), o.sizes_.end());
    return Dims(std::move(s));
  }

 private:
  void check() const {
    require(!sizes_.empty(), "Dims: empty subsystem list");
    for (int s : sizes_) require(s >= 1, "Dims: subsystem size must be >= 1");
  }
  std::vector<int> sizes_;
};

class PureState {
 public:
  PureState(Dims dims, Vec amplitudes, bool allow_unnormalized = false)
      : dims_(std::move(dims)), amp_(std::move(amplitudes)) {
    require(amp_.size() == dims_.total(), "PureState: amplitude length mismatch");
    if (!allow_unnormalized)
      require(std::abs(amp_.norm() - 1.0) < 1e-9, "PureState: not normalized");
  }

  const Dims& dims() const { return dims_; }
  const Vec& amplitudes() const { return amp_; }
  int dim() const { return static_cast<int>(amp_.size()); }

 private:
  Dims dims_;
  Vec amp_;
};

class DensityOp {
 public:
  DensityOp(Dims dims, Mat entries) : dims_(std::move(dims)), m_(std::move(entries)) {
    require(m_.rows() == m_.cols() && m_.rows() == dims_.total(),
            "DensityOp: shape mismatch");
    validate();
  }

  static DensityOp from_pure(const PureState& psi) {
    return DensityOp(psi.dims(), psi.amplitudes() * psi.amplitudes().adjoint());
  }

  const Dims& dims() const { return dims_; }
  const Mat& matrix() const { return m_; }
  int dim() const { return static_cast<int>(m_.rows()); }

  /// Restore exact Hermiticity after accumulated arithmetic.
  void symmetrize() { m_ = 0.5 * (m_ + m_.adjoint().eval()); }

  void validate(double herm_tol = 1e-9, double trace_tol = 1e-9,
                double eig_floor = -1e-8) const {
    require((m_ - m_.adjoint()).cwiseAbs().maxCoeff() < herm_tol,
            "DensityOp: not Hermitian");
    require(std::abs(m_.trace().real() - 1.0) < trace_tol &&
                std::abs(m_.trace().imag()) < trace_tol,
            "DensityOp: trace != 1");
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m_ + m_.adjoint().eval()),
                                          Eigen::EigenvaluesOnly);
    require(es.eigenvalues().minCoeff() >= eig_floor,
            "DensityOp: negative eigenvalue");
  }

 private:
  Dims dims_;
  Mat m_;
};

class LinOp {
 public:
  LinOp(Dims dims, Mat entries, std::string label = "")
      : dims_(std::move(dims)), m_(std::move(entries)), label_(std::move(label)) {
    require(m_.rows() == m_.cols() && m_.rows() == dims_.total(),
            "LinOp: shape inconsistent with dims");
  }

  const Dims& dims() const { return dims_; }
  const Mat& matrix() const { return m_; }
  const std::string& label() const { return label_; }

 private:
  Dims dims_;
  Mat m_;
  std::string label_;
};

// ---- elementary operators -------------------------------------------------

inline LinOp identity(int d) { return LinOp(Dims{d}, Mat::Identity(d, d), "1"); }

inline LinOp destroy(int d) {
  Mat a = Mat::Zero(d, d);
  for (int n = 1; n < d; ++n) a(n - 1, n) = std::sqrt(double(n));
  return LinOp(Dims{d}, a, "a");
}

inline LinOp create(int d) { return LinOp(Dims{d}, destroy(d).matrix().adjoint(), "adag"); }

inline LinOp number(int d) {
  Mat n = Mat::Zero(d, d);
  for (int k = 0; k < d; ++k) n(k, k) = double(k);
  return LinOp(Dims{d}, n, "n");
}

inline LinOp pauli_x() {
  Mat m(2, 2);
  m << 0, 1, 1, 0;
  return LinOp(Dims{2}, m, "X");
}
inline LinOp pauli_y() {
  Mat m(2, 2);
  m << 0, cxd(0, -1), cxd(0, 1), 0;
  return LinOp(Dims{2}, m, "Y");
}
inline LinOp pauli_z() {
  Mat m(2, 2);
  m << 1, 0, 0, -1;
  return LinOp(Dims{2}, m, "Z");
}

/// |a><b| on a d-level system.
inline LinOp transition(int d, int a, int b) {
  require(a >= 0 && a < d && b >= 0 && b < d, "transition: index out of range");
  Mat m = Mat::Zero(d, d);
  m(a, b) = 1.0;
  return LinOp(Dims{d}, m, "tau");
}

inline PureState basis_state(int d, int k) {
  require(k >= 0 && k < d, "basis_state: index out of range");
  Vec v = Vec::Zero(d);
  v(k) = 1.0;
  return PureState(Dims{d}, v);
}

/// Truncated coherent state; renormalized within the cutoff.
inline PureState coherent_state(int d, cxd alpha) {
  Vec v(d);
  // amplitudes alpha^n/sqrt(n!) built recursively for stability
  v(0) = 1.0;
  for (int n = 1; n < d; ++n) v(n) = v(n - 1) * alpha / std::sqrt(double(n));
  v *= std::exp(-0.5 * std::norm(alpha));
  return PureState(Dims{d}, v / v.norm());
}

// ---- composition and reduction ---------------------------------------------

inline LinOp tensor(const std::vector<LinOp>& factors) {
  require(!factors.empty(), "tensor: no factors");
  Mat m = factors.front().matrix();
  Dims d = factors.front().dims();
  for (std::size_t i = 1; i < factors.size(); ++i) {
    m = kron(m, factors[i].matrix());
    d = d.concat(factors[i].dims());
  }
  return LinOp(d, std::move(m));
}

inline PureState tensor(const std::vector<PureState>& factors) {
  require(!factors.empty(), "tensor: no factors");
  Vec v = factors.front().amplitudes();
  Dims d = factors.front().dims();
  for (std::size_t i = 1; i < factors.size(); ++i) {
    const Vec& w = factors[i].amplitudes();
    Vec out(v.size() * w.size());
    for (Eigen::Index a = 0; a < v.size(); ++a)
      out.segment(a * w.size(), w.size()) = v(a) * w;
    v = std::move(out);
    d = d.concat(factors[i].dims());
  }
  return PureState(d, std::move(v), true);
}

/// Place `op` on subsystem `which` of a composite space, identity elsewhere.
inline LinOp embed(const LinOp& op, int which, const Dims& dims) {
  require(which >= 0 && which < dims.subsystems(), "embed: bad subsystem index");
  require(op.dims().total() == dims[which], "embed: operator size mismatch");
  std::vector<LinOp> factors;
  for (int i = 0; i < dims.subsystems(); ++i)
    factors.push_back(i == which ? op : identity(dims[i]));
  return tensor(factors);
}

/// Reduce a density operator to the listed subsystems (kept in their original
/// order); the remaining subsystems are traced out.
inline DensityOp partial_trace(const DensityOp& rho, const std::vector<int>& keep) {
  require(!keep.empty(), "partial_trace: empty keep set");
  const Dims& dims = rho.dims();
  const int ns = dims.subsystems();
  std::vector<bool> kept(ns, false);
  for (int k : keep) {
    require(k >= 0 && k < ns, "partial_trace: index out of range");
    require(!kept[k], "partial_trace: repeated index");
    kept[k] = true;
  }

  std::vector<int> kept_list, traced_list;
  for (int i = 0; i < ns; ++i) (kept[i] ? kept_list : traced_list).push_back(i);

  std::vector<int> keep_sizes, stride(ns);
  for (int i = ns - 1, s = 1; i >= 0; --i) {
    stride[i] = s;
    s *= dims[i];
  }
  int dk = 1, dt = 1;
  for (int i : kept_list) {
    keep_sizes.push_back(dims[i]);
    dk *= dims[i];
  }
  for (int i : traced_list) dt *= dims[i];

  auto unrank = [&](int r, const std::vector<int>& subs) {
    // map a rank within the listed subsystems to a full-space offset
    int offset = 0;
    for (int i = static_cast<int>(subs.size()) - 1; i >= 0; --i) {
      const int d = dims[subs[i]];
      offset += (r % d) * stride[subs[i]];
      r /= d;
    }
    return offset;
  };

  Mat out = Mat::Zero(dk, dk);
  const Mat& m = rho.matrix();
  for (int t = 0; t < dt; ++t) {
    const int toff = unrank(t, traced_list);
    for (int i = 0; i < dk; ++i) {
      const int ioff = unrank(i, kept_list) + toff;
      for (int j = 0; j < dk; ++j) out(i, j) += m(ioff, unrank(j, kept_list) + toff);
    }
  }
  return DensityOp(Dims(keep_sizes), std::move(out));
}

// ---- fidelity and concurrence ----------------------------------------------

inline double fidelity(const PureState& a, const PureState& b) {
  require(a.dims() == b.dims(), "fidelity: dimension mismatch");
  return std::norm(a.amplitudes().dot(b.amplitudes()));
}

inline double fidelity(const PureState& psi, const DensityOp& rho) {
  require(psi.dims() == rho.dims(), "fidelity: dimension mismatch");
  return std::real(psi.amplitudes().dot(rho.matrix() * psi.amplitudes()));
}

inline double fidelity(const DensityOp& rho, const PureState& psi) {
  return fidelity(psi, rho);
}

namespace detail {
inline Mat sqrtm_psd(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(m);
  Vec s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().cast<cxd>();
  return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().adjoint();
}
}  // namespace detail

/// Uhlmann fidelity, computed as the squared trace norm of sqrt(rho) sqrt(sigma)
/// (manifestly symmetric under exchange of arguments).
inline double fidelity(const DensityOp& a, const DensityOp& b) {
  require(a.dims() == b.dims(), "fidelity: dimension mismatch");
  Mat c = detail::sqrtm_psd(a.matrix()) * detail::sqrtm_psd(b.matrix());
  Eigen::JacobiSVD<Mat> svd(c);
  double s = svd.singularValues().sum();
  return s * s;
}

namespace detail {
struct XEntries {
  double a, b, c, d;
  cxd w, z;
};

/// Match the two-qubit X pattern (nonzero only on the two diagonals).
inline std::optional<XEntries> as_x_state(const Mat& m, double tol) {
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const bool allowed = (i == j) || (i + j == 3);
      if (!allowed && std::abs(m(i, j)) > tol) return std::nullopt;
    }
  return XEntries{m(0, 0).real(), m(1, 1).real(), m(2, 2).real(), m(3, 3).real(),
                  m(0, 3), m(1, 2)};
}
}  // namespace detail

/// Closed-form concurrence for a two-qubit X state.
inline double concurrence_x(const detail::XEntries& x) {
  const double t1 = std::abs(x.z) - std::sqrt(std::max(0.0, x.a * x.d));
  const double t2 = std::abs(x.w) - std::sqrt(std::max(0.0, x.b * x.c));
  return 2.0 * std::max({0.0, t1, t2});
}

/// Concurrence via the ordered eigenvalues of rho (Y x Y) rho* (Y x Y).
inline double concurrence_general(const Mat& m) {
  Mat yy = kron(pauli_y().matrix(), pauli_y().matrix());
  Mat r = m * yy * m.conjugate() * yy;
  Eigen::ComplexEigenSolver<Mat> es(r);
  std::vector<double> lam(4);
  for (int i = 0; i < 4; ++i) lam[i] = std::sqrt(std::max(0.0, es.eigenvalues()(i).real()));
  std::sort(lam.begin(), lam.end(), std::greater<>());
  return std::max(0.0, lam[0] - lam[1] - lam[2] - lam[3]);
}

/// Wootters concurrence of a two-qubit state. States matching the X pattern
/// within 1e-12 take the closed-form path.
inline double concurrence(const DensityOp& rho) {
  require(rho.dims() == Dims({2, 2}), "concurrence: requires two qubits");
  if (auto x = detail::as_x_state(rho.matrix(), 1e-12)) return concurrence_x(*x);
  return concurrence_general(rho.matrix());
}

}  // namespace cavkit::qcore
