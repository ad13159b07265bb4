#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cavkit/common.hpp"

namespace cavkit::ode {

struct Options {
  double rtol = 1e-8;
  double atol = 1e-10;
  double max_step = std::numeric_limits<double>::infinity();
  double fixed_step = 0.0;  // > 0 disables adaptivity and uses this step
  // Called after every accepted step; may throw to abort the integration.
  std::function<void(double, const void*)> on_accept;
};

// Dormand-Prince 5(4) tableau.
namespace dp {
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                        a53 = 64448.0 / 6561, a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33,
                        a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
}  // namespace dp

template <class State>
double error_norm(const State& err, const State& y0, const State& y1,
                  double rtol, double atol) {
  double acc = 0.0;
  const auto* e = err.data();
  const auto* a = y0.data();
  const auto* b = y1.data();
  const Eigen::Index n = err.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sc = atol + rtol * std::max(std::abs(a[i]), std::abs(b[i]));
    acc += sq(std::abs(e[i]) / sc);
  }
  return std::sqrt(acc / static_cast<double>(n));
}

/// Integrate dy/dt = f(t, y) from t0 to t1 in place. f has signature
/// f(t, const State&, State& dydt). Throws numerical_error on step underflow
/// or NaN.
template <class State, class F>
void integrate(F&& f, State& y, double t0, double t1, const Options& opt) {
  if (t1 == t0) return;
  require(t1 > t0, "ode::integrate: reversed interval");
  State k1 = y, k2 = y, k3 = y, k4 = y, k5 = y, k6 = y, k7 = y, ytmp = y,
        ynew = y, err = y;

  double t = t0;
  f(t, y, k1);
  double h = opt.fixed_step > 0.0
                 ? opt.fixed_step
                 : std::min({(t1 - t0) / 16.0, opt.max_step, 0.1});
  const double hmin = (t1 - t0) * 1e-14;

  while (t < t1) {
    if (!(h > 0.0)) throw numerical_error("ode: nonpositive step");
    h = std::min({h, t1 - t, opt.max_step});

    ytmp = y + h * dp::a21 * k1;
    f(t + dp::c2 * h, ytmp, k2);
    ytmp = y + h * (dp::a31 * k1 + dp::a32 * k2);
    f(t + dp::c3 * h, ytmp, k3);
    ytmp = y + h * (dp::a41 * k1 + dp::a42 * k2 + dp::a43 * k3);
    f(t + dp::c4 * h, ytmp, k4);
    ytmp = y + h * (dp::a51 * k1 + dp::a52 * k2 + dp::a53 * k3 + dp::a54 * k4);
    f(t + dp::c5 * h, ytmp, k5);
    ytmp = y + h * (dp::a61 * k1 + dp::a62 * k2 + dp::a63 * k3 + dp::a64 * k4 +
                    dp::a65 * k5);
    f(t + h, ytmp, k6);
    ynew = y + h * (dp::b1 * k1 + dp::b3 * k3 + dp::b4 * k4 + dp::b5 * k5 +
                    dp::b6 * k6);
    f(t + h, ynew, k7);
    err = h * (dp::e1 * k1 + dp::e3 * k3 + dp::e4 * k4 + dp::e5 * k5 +
               dp::e6 * k6 + dp::e7 * k7);

    const double enorm = error_norm(err, y, ynew, opt.rtol, opt.atol);
    if (!std::isfinite(enorm))
      throw numerical_error("ode: NaN detected at t = " + std::to_string(t));

    if (opt.fixed_step > 0.0 || enorm <= 1.0) {
      t += h;
      y.swap(ynew);
      k1.swap(k7);  // FSAL
      if (opt.on_accept) opt.on_accept(t, static_cast<const void*>(&y));
    }
    // on rejection k1 still matches y, so no re-evaluation is needed
    if (opt.fixed_step <= 0.0) {
      const double factor =
          enorm == 0.0 ? 5.0
                       : std::clamp(0.9 * std::pow(enorm, -0.2), 0.2, 5.0);
      h *= factor;
      if (h < hmin && t < t1)
        throw numerical_error("ode: step size underflow at t = " +
                              std::to_string(t));
    }
  }
}

/// Convenience wrapper: integrate across [grid.front(), grid.back()] and
/// record the state at every grid point, restarting at the given breakpoints.
template <class State, class F>
std::vector<State> solve_at(F&& f, const State& y0,
                            const std::vector<double>& grid,
                            const std::vector<double>& breakpoints,
                            const Options& opt) {
  require(!grid.empty(), "ode::solve_at: empty grid");
  for (std::size_t i = 1; i < grid.size(); ++i)
    require(grid[i] > grid[i - 1], "ode::solve_at: grid must increase");

  // merge grid and breakpoints into one ordered list of stopping times
  std::vector<double> stops = grid;
  for (double b : breakpoints)
    if (b > grid.front() && b < grid.back()) stops.push_back(b);
  std::sort(stops.begin(), stops.end());
  stops.erase(std::unique(stops.begin(), stops.end(),
                          [](double a, double b) {
                            return std::abs(a - b) <
                                   1e-12 * (1.0 + std::abs(a));
                          }),
              stops.end());

  std::vector<State> out;
  out.reserve(grid.size());
  State y = y0;
  std::size_t gi = 0;
  if (grid.front() == stops.front()) {
    out.push_back(y);
    ++gi;
  }
  for (std::size_t si = 0; si + 1 < stops.size(); ++si) {
    integrate(f, y, stops[si], stops[si + 1], opt);
    if (gi < grid.size() &&
        std::abs(stops[si + 1] - grid[gi]) <= 1e-12 * (1.0 + std::abs(grid[gi]))) {
      out.push_back(y);
      ++gi;
    }
  }
  return out;
}

}  // namespace cavkit::ode
