#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "cavkit/flyingcat.hpp"
#include "cavkit/rng.hpp"

using namespace cavkit;
using namespace cavkit::flyingcat;
using qcore::DensityOp;
using qcore::Dims;
using qcore::PureState;

namespace {

DensityOp random_three_qubit(RandomStream& rng, bool pure) {
  if (pure) return DensityOp::from_pure(PureState(Dims{2, 2, 2}, haar_state(8, rng)));
  Mat m = Mat::Zero(8, 8);
  for (int r = 0; r < 3; ++r) {
    Vec v = haar_state(8, rng);
    m += rng.uniform(0.2, 1.0) * v * v.adjoint();
  }
  m /= m.trace().real();
  return DensityOp(Dims{2, 2, 2}, m);
}

}  // namespace

TEST_CASE("loss amplitudes: no loss passes the pulse through") {
  auto a = loss_amplitudes(2.0, {0.0, 0.0, 0.0});
  REQUIRE(a.alpha_bar == Catch::Approx(2.0));
  for (double l : a.alpha_lost) REQUIRE(l == 0.0);
}

TEST_CASE("loss amplitudes preserve the total intensity") {
  RandomStream rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const double alpha = rng.uniform(0.2, 3.0);
    std::array<double, 3> eta{rng.uniform(), rng.uniform(), rng.uniform()};
    auto a = loss_amplitudes(alpha, eta);
    double total = sq(a.alpha_bar);
    for (double l : a.alpha_lost) total += sq(l);
    REQUIRE(total == Catch::Approx(sq(alpha)).epsilon(1e-12));
  }
}

TEST_CASE("loss amplitudes match the sequential beam-splitter product") {
  const double alpha = 2.0;
  std::array<double, 3> eta{0.01, 0.01, 0.01};
  auto a = loss_amplitudes(alpha, eta);
  double running = alpha;
  for (int i = 0; i < 3; ++i) {
    REQUIRE(a.alpha_lost[i] == Catch::Approx(running * std::sqrt(eta[i])).epsilon(1e-14));
    running *= std::sqrt(1.0 - eta[i]);
  }
  REQUIRE(a.alpha_bar == Catch::Approx(running).epsilon(1e-14));
  REQUIRE(a.alpha_bar == Catch::Approx(2.0 * std::pow(0.99, 1.5)).epsilon(1e-14));
}

TEST_CASE("lossless check leaves parity blocks pure and routes the field by parity") {
  RandomStream rng(11);
  auto rho = random_three_qubit(rng, true);
  CheckConfig cfg;
  cfg.alpha = 1.3;
  auto joint = parity_check_channel(rho, cfg);
  REQUIRE(joint.alpha_bar == Catch::Approx(1.3));
  for (int s = 0; s < 8; ++s)
    for (int sp = 0; sp < 8; ++sp) {
      const int f = ((s ^ (s >> 1) ^ (s >> 2)) & 1) ? -1 : 1;
      const int fp = ((sp ^ (sp >> 1) ^ (sp >> 2)) & 1) ? -1 : 1;
      REQUIRE(std::abs(joint.entries(JointState::index(s, f), JointState::index(sp, fp)) -
                       rho.matrix()(s, sp)) < 1e-14);
    }
  REQUIRE(joint.trace() == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("diagonal blocks equal the two-dephasing composition") {
  RandomStream rng(5);
  auto rho = random_three_qubit(rng, true);
  CheckConfig cfg;
  cfg.alpha = 1.1;
  cfg.eta = {0.04, 0.07, 0.02};
  auto joint = parity_check_channel(rho, cfg);

  // explicit composition of the two z-type dephasing channels on the input;
  // state bits are ordered (qubit1, qubit2, qubit3) from high to low
  auto z_on = [](std::vector<int> qubits) {
    Mat z = Mat::Identity(8, 8);
    for (int s = 0; s < 8; ++s) {
      int bits = 0;
      for (int q : qubits)
        if ((s >> (3 - q)) & 1) ++bits;
      if (bits & 1) z(s, s) = -1.0;
    }
    return z;
  };
  const Mat e1 = z_on({2, 3});
  const Mat e2 = z_on({3});
  const double p1 = cfg.p1(), p2 = cfg.p2();
  Mat expect = rho.matrix();
  expect = (1.0 - p2) * expect + p2 * e2 * expect * e2;
  expect = (1.0 - p1) * expect + p1 * e1 * expect * e1;

  // assemble the diagonal field blocks from the joint state
  Mat blocks = Mat::Zero(8, 8);
  for (int s = 0; s < 8; ++s)
    for (int sp = 0; sp < 8; ++sp) {
      const int f = ((s ^ (s >> 1) ^ (s >> 2)) & 1) ? -1 : 1;
      const int fp = ((sp ^ (sp >> 1) ^ (sp >> 2)) & 1) ? -1 : 1;
      if (f == fp)
        blocks(s, sp) = joint.entries(JointState::index(s, f), JointState::index(sp, fp));
    }
  for (int s = 0; s < 8; ++s)
    for (int sp = 0; sp < 8; ++sp) {
      const int par = (s ^ (s >> 1) ^ (s >> 2)) & 1;
      const int parp = (sp ^ (sp >> 1) ^ (sp >> 2)) & 1;
      if (par == parp)
        REQUIRE(std::abs(blocks(s, sp) - expect(s, sp)) < 1e-12);
    }
}

TEST_CASE("channel output equals the explicit loss-mode construction") {
  RandomStream rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    auto rho = random_three_qubit(rng, trial % 2 == 0);
    CheckConfig cfg;
    cfg.alpha = rng.uniform(0.3, 2.5);
    cfg.eta = {rng.uniform(0.0, 0.3), rng.uniform(0.0, 0.3), rng.uniform(0.0, 0.3)};
    cfg.basis = rng.bernoulli(0.5) ? CheckBasis::z : CheckBasis::x;
    auto a = parity_check_channel(rho, cfg);
    auto b = parity_check_loss_mode_oracle(rho, cfg);
    REQUIRE((a.entries - b.entries).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("x-basis backaction dephases in the x frame") {
  // |+++> is even under X-parity; the x check should leave it intact
  Vec plus = Vec::Ones(8) / std::sqrt(8.0);
  auto rho = DensityOp::from_pure(PureState(Dims{2, 2, 2}, plus));
  CheckConfig cfg;
  cfg.alpha = 1.5;
  cfg.eta = {0.05, 0.05, 0.05};
  cfg.basis = CheckBasis::x;
  auto joint = parity_check_channel(rho, cfg);
  auto meas = homodyne_parity_measurement(joint);
  REQUIRE(meas.prob_even > 0.97);
  // the surviving even branch keeps large overlap with the input
  const double f = std::real(plus.dot(meas.post_even.matrix() * plus));
  REQUIRE(f > 0.97);
}

TEST_CASE("measurement errors at the reference amplitudes") {
  CheckConfig cfg;
  cfg.alpha = 1e-9;
  REQUIRE(cfg.p_measure() == Catch::Approx(0.5).margin(1e-8));
  cfg.alpha = 1.0;
  REQUIRE(cfg.p_measure() == Catch::Approx(0.5 * std::erfc(std::sqrt(2.0))).epsilon(1e-12));
  REQUIRE(cfg.p_measure() == Catch::Approx(0.02275).margin(2e-5));
}

TEST_CASE("qnd on an even-parity eigenstate") {
  Vec xi = Vec::Zero(8);
  xi(0b000) = std::sqrt(0.3);
  xi(0b011) = std::sqrt(0.5);
  xi(0b101) = std::sqrt(0.2);
  auto rho = DensityOp::from_pure(PureState(Dims{2, 2, 2}, xi));
  CheckConfig cfg;
  cfg.alpha = 3.0;
  auto meas = homodyne_parity_measurement(parity_check_channel(rho, cfg));
  REQUIRE(meas.prob_even == Catch::Approx(1.0 - cfg.p_measure()).epsilon(1e-12));
  REQUIRE((meas.post_even.matrix() - rho.matrix()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("parity populations survive the ideal measurement") {
  RandomStream rng(41);
  auto rho = random_three_qubit(rng, false);
  CheckConfig cfg;
  cfg.alpha = 2.0;
  auto joint = parity_check_channel(rho, cfg);
  auto meas = homodyne_parity_measurement(joint);
  auto parity_pop = [](const Mat& m, int par) {
    double w = 0.0;
    for (int s = 0; s < 8; ++s)
      if (((s ^ (s >> 1) ^ (s >> 2)) & 1) == par) w += std::real(m(s, s));
    return w;
  };
  const double pre_even = parity_pop(rho.matrix(), 0);
  const double post_mix =
      meas.prob_even * parity_pop(meas.post_even.matrix(), 0) +
      meas.prob_odd * parity_pop(meas.post_odd.matrix(), 0);
  REQUIRE(post_mix == Catch::Approx(pre_even).margin(1e-12));
}

TEST_CASE("joint inference errors follow the complementary error function") {
  Vec xi = Vec::Zero(8);
  xi(0b000) = std::sqrt(0.7);  // even weight 0.7
  xi(0b100) = std::sqrt(0.3);  // odd weight 0.3
  auto rho = DensityOp::from_pure(PureState(Dims{2, 2, 2}, xi));
  CheckConfig cfg;
  cfg.alpha = 1.2;
  auto meas = homodyne_parity_measurement(parity_check_channel(rho, cfg));
  const double scale = 0.5 * std::erfc(std::sqrt(2.0) * cfg.alpha_bar());
  REQUIRE(meas.joint_error_even == Catch::Approx(0.3 * scale).epsilon(1e-10));
  REQUIRE(meas.joint_error_odd == Catch::Approx(0.7 * scale).epsilon(1e-10));
  REQUIRE(meas.p_measure == Catch::Approx(scale).epsilon(1e-10));
}

TEST_CASE("error trade-off has an interior optimum") {
  auto t = total_error(1e-2, 1e-2);
  REQUIRE(t.interior_minimum);

  // brute-force grid oracle at 1e-4 resolution
  double best = 1e300, arg = 0.0;
  for (double a = 0.1; a <= 10.0; a += 1e-4) {
    const double v = t.total_error(a);
    if (v < best) {
      best = v;
      arg = a;
    }
  }
  REQUIRE(t.alpha_opt == Catch::Approx(arg).margin(2e-4));
  REQUIRE(t.p_opt == Catch::Approx(best).margin(1e-8));
}

TEST_CASE("error trade-off near zero amplitude approaches a coin flip") {
  auto t = total_error(0.0, 0.0);
  REQUIRE(t.total_error(1e-6) == Catch::Approx(0.5).margin(1e-5));
}

TEST_CASE("interior optimum across the loss range") {
  for (double eta : {1e-4, 1e-3, 1e-2, 1e-1}) {
    auto t = total_error(eta, eta);
    REQUIRE(t.interior_minimum);
    REQUIRE(t.p_opt < std::min(t.total_error(0.1), t.total_error(10.0)));
  }
}

TEST_CASE("entangled-state preparation: ideal limit") {
  auto g = ghz_prepare(6.0, 0.0, 0.0);
  REQUIRE(g.total_error < 1e-12);
  Vec ghz = Vec::Zero(8);
  ghz(0) = ghz(7) = 1.0 / std::sqrt(2.0);
  REQUIRE(qcore::fidelity(PureState(Dims{2, 2, 2}, ghz), g.state) ==
          Catch::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("entangled-state preparation: error composition and fidelity") {
  const double alpha = 1.5, e12 = 0.02, e23 = 0.035;
  auto g = ghz_prepare(alpha, e12, e23);
  auto perr = [&](double eta) { return 0.5 * (1.0 - std::exp(-2.0 * eta * sq(alpha))); };
  auto qerr = [&](double eta) {
    return 0.5 * std::erfc(std::sqrt(2.0) * (1.0 - eta) * alpha);
  };
  const double p12 = perr(e12), p23 = perr(e23), q12 = qerr(e12), q23 = qerr(e23);
  const double p = p12 + p23 - p12 * p23 + q12 + q23 + q12 * q23;
  REQUIRE(g.total_error == Catch::Approx(p).epsilon(1e-12));

  Vec ghz = Vec::Zero(8);
  ghz(0) = ghz(7) = 1.0 / std::sqrt(2.0);
  REQUIRE(qcore::fidelity(PureState(Dims{2, 2, 2}, ghz), g.state) ==
          Catch::Approx(1.0 - p).margin(1e-12));
}

TEST_CASE("feasibility at the published operating point") {
  FeasibilityParams fp;
  fp.chi = -2.0 * pi * 1.05e6;
  fp.kappa0 = 2.0 * std::abs(fp.chi);
  fp.kappa_int = 2.0 * pi * 0.22e6;
  fp.tau = 500e-9;
  fp.t2star = 6e-6;
  auto r = feasibility(fp, 1.0);
  REQUIRE(r.bandwidth_term == Catch::Approx(0.046).margin(0.002));
  REQUIRE(r.eps_qubit == Catch::Approx(0.0833).margin(0.001));
  // leading-order internal-loss term of the printed expansion
  REQUIRE(r.internal_term ==
          Catch::Approx(sq(0.22 / 1.05) / 4.0).epsilon(1e-12));
}

TEST_CASE("feasibility: reflection error vanishes for a long lossless pulse") {
  FeasibilityParams fp;
  fp.chi = 1.0;
  fp.kappa0 = 2.0;
  fp.kappa_int = 0.0;
  fp.tau = 3000.0;
  fp.t2star = 1e9;
  auto r = feasibility(fp, 1.0);
  REQUIRE(r.eps_reflect_exact < 1e-6);
}

TEST_CASE("feasibility: quadrature tracks the expansion in the valid regime") {
  RandomStream rng(17);
  for (int k = 0; k < 8; ++k) {
    FeasibilityParams fp;
    fp.chi = 1.0;
    fp.kappa0 = 2.0;
    fp.kappa_int = rng.uniform(0.0, 0.25);
    fp.tau = 1.0 / rng.uniform(0.05, 0.25);
    fp.t2star = 1.0;
    auto r = feasibility(fp, rng.uniform(0.5, 1.2));
    REQUIRE(r.eps_reflect_exact ==
            Catch::Approx(r.eps_reflect_approx).epsilon(0.15));
  }
}

TEST_CASE("repeated weak measurements combine to the single-shot error") {
  // soft combination of N shots at alpha0 equals one shot at sqrt(N) alpha0
  const double alpha0 = 0.5;
  const int shots = 4;
  RandomStream rng(2718, "soft");
  const int trials = 200000;
  int wrong = 0;
  for (int t = 0; t < trials; ++t) {
    double sum = 0.0;
    for (int k = 0; k < shots; ++k)
      sum += std::sqrt(2.0) * alpha0 + rng.normal() / std::sqrt(2.0);
    if (sum < 0.0) ++wrong;
  }
  const double pm = double(wrong) / trials;
  const double expect = 0.5 * std::erfc(std::sqrt(2.0) * std::sqrt(double(shots)) * alpha0);
  const double sigma = std::sqrt(expect * (1.0 - expect) / trials);
  REQUIRE(std::abs(pm - expect) < 3.0 * sigma + 1e-12);
}

TEST_CASE("majority voting is roughly the square root of the soft error") {
  const double alpha0 = 0.5;
  const int shots = 9;
  const double q = 0.5 * std::erfc(std::sqrt(2.0) * alpha0);
  // exact binomial majority error
  double p_major = 0.0;
  for (int k = (shots + 1) / 2; k <= shots; ++k) {
    double c = std::exp(std::lgamma(shots + 1.0) - std::lgamma(k + 1.0) -
                        std::lgamma(shots - k + 1.0));
    p_major += c * std::pow(q, k) * std::pow(1.0 - q, shots - k);
  }
  const double p_soft = 0.5 * std::erfc(std::sqrt(2.0) * 3.0 * alpha0);
  REQUIRE(p_major > 3.0 * p_soft);
  REQUIRE(p_major == Catch::Approx(std::sqrt(p_soft)).margin(10.0 * std::sqrt(p_soft)));
  REQUIRE(p_major > 0.1 * std::sqrt(p_soft));
}

TEST_CASE("hook errors compose with the gauge operator to a single flip") {
  // symbolic check on pauli masks: (Z2 Z3) * (Z1 Z2 Z3) = Z1
  const int hook = 0b011, gauge = 0b111;
  REQUIRE((hook ^ gauge) == 0b100);
}
