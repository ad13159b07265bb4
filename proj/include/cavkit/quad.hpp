#pragma once

#include <Eigen/Eigenvalues>
#include <cmath>
#include <functional>
#include <map>
#include <mutex>
#include <vector>

#include "cavkit/common.hpp"

namespace cavkit::quad {

namespace detail {
// 15-point Kronrod nodes/weights on [-1,1] with the embedded 7-point Gauss
// weights (QUADPACK constants).
inline constexpr double xgk[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144838258730, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr double wgk[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr double wg[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};
}  // namespace detail

struct GKResult {
  double value = 0.0;
  double error = 0.0;
};

template <class F>
GKResult gk15(F&& f, double a, double b) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  double resk = 0.0, resg = 0.0;
  for (int j = 0; j < 7; ++j) {
    const double x = h * detail::xgk[j];
    const double fsum = f(c - x) + f(c + x);
    resk += detail::wgk[j] * fsum;
    if (j % 2 == 1) resg += detail::wg[j / 2] * fsum;
  }
  const double fc = f(c);
  resk += detail::wgk[7] * fc;
  resg += detail::wg[3] * fc;
  GKResult r;
  r.value = resk * h;
  r.error = std::abs((resk - resg) * h);
  return r;
}

/// Adaptive Gauss-Kronrod on [a,b] by interval bisection.
template <class F>
double integrate(F&& f, double a, double b, double rtol = 1e-10,
                 double atol = 1e-14, int max_depth = 48) {
  struct Seg {
    double a, b, value, error;
    int depth;
  };
  GKResult whole = gk15(f, a, b);
  std::vector<Seg> stack{{a, b, whole.value, whole.error, 0}};
  double total = whole.value, toterr = whole.error;
  std::size_t iterations = 0;
  while (toterr > atol + rtol * std::abs(total)) {
    if (++iterations > 200000)
      throw numerical_error("adaptive quadrature failed to converge");
    // split the segment with the largest error
    std::size_t worst = 0;
    for (std::size_t i = 1; i < stack.size(); ++i)
      if (stack[i].error > stack[worst].error) worst = i;
    Seg s = stack[worst];
    if (s.depth >= max_depth)
      throw numerical_error("adaptive quadrature: max depth reached");
    const double m = 0.5 * (s.a + s.b);
    GKResult left = gk15(f, s.a, m), right = gk15(f, m, s.b);
    total += left.value + right.value - s.value;
    toterr += left.error + right.error - s.error;
    stack[worst] = {s.a, m, left.value, left.error, s.depth + 1};
    stack.push_back({m, s.b, right.value, right.error, s.depth + 1});
  }
  return total;
}

template <class F>
cxd integrate_complex(F&& f, double a, double b, double rtol = 1e-10,
                      double atol = 1e-14) {
  double re = integrate([&](double x) { return std::real(f(x)); }, a, b, rtol, atol);
  double im = integrate([&](double x) { return std::imag(f(x)); }, a, b, rtol, atol);
  return {re, im};
}

/// Integral over the whole real line: widen a symmetric window until the
/// increment is negligible. Suitable for integrands with decaying tails.
template <class F>
double integrate_line(F&& f, double scale, double rtol = 1e-9,
                      double atol = 1e-14) {
  double w = 4.0 * scale;
  double total = integrate(f, -w, w, rtol, atol);
  for (int round = 0; round < 40; ++round) {
    const double grown = 2.0 * w;
    const double extra = integrate(f, w, grown, rtol, atol) +
                         integrate(f, -grown, -w, rtol, atol);
    total += extra;
    w = grown;
    if (std::abs(extra) <= atol + 0.5 * rtol * std::abs(total)) return total;
  }
  throw numerical_error("integrate_line: tails did not decay");
}

struct Rule {
  std::vector<double> x, w;
};

/// Gauss-Legendre nodes/weights on [-1,1] via the Golub-Welsch eigenproblem.
inline Rule gauss_legendre(int n) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    J(k, k - 1) = J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  Rule r;
  r.x.resize(n);
  r.w.resize(n);
  for (int k = 0; k < n; ++k) {
    r.x[k] = es.eigenvalues()(k);
    r.w[k] = 2.0 * sq(es.eigenvectors()(0, k));
  }
  return r;
}

/// Gauss-Hermite rule for weight e^{-x^2} on the real line. Rules are cached
/// per order (the eigensolve is not cheap at high orders).
inline const Rule& gauss_hermite(int n) {
  static std::map<int, Rule> cache;
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;

  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = std::sqrt(0.5 * k);
    J(k, k - 1) = J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  Rule r;
  r.x.resize(n);
  r.w.resize(n);
  const double mu0 = std::sqrt(pi);
  for (int k = 0; k < n; ++k) {
    r.x[k] = es.eigenvalues()(k);
    r.w[k] = mu0 * sq(es.eigenvectors()(0, k));
  }
  return cache.emplace(n, std::move(r)).first->second;
}

/// Average of f over a unit-weight Gaussian using Gauss-Hermite, doubling the
/// order until the relative change drops below rtol.
template <class F>
auto hermite_average(F&& f, double rtol = 1e-8, int n0 = 64, int nmax = 1024)
    -> decltype(f(0.0)) {
  using R = decltype(f(0.0));
  auto eval = [&](int n) {
    const Rule& r = gauss_hermite(n);
    R acc = R(0);
    for (int k = 0; k < n; ++k) acc += r.w[k] * f(r.x[k]);
    return R(acc / std::sqrt(pi));
  };
  R prev = eval(n0);
  for (int n = 2 * n0; n <= nmax; n *= 2) {
    R cur = eval(n);
    if (std::abs(cur - prev) <= rtol * (std::abs(cur) + 1e-300)) return cur;
    prev = cur;
  }
  return prev;
}

/// Composite fixed-order Gauss-Legendre over [a,b] with `panels` subintervals.
template <class F>
double composite(F&& f, double a, double b, int panels, const Rule& rule) {
  const double h = (b - a) / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double c = a + (p + 0.5) * h;
    for (std::size_t k = 0; k < rule.x.size(); ++k)
      total += 0.5 * h * rule.w[k] * f(c + 0.5 * h * rule.x[k]);
  }
  return total;
}

}  // namespace cavkit::quad
