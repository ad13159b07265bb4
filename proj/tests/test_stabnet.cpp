#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "cavkit/stabnet.hpp"

using namespace cavkit;
using namespace cavkit::stabnet;
using qcore::DensityOp;
using qcore::Dims;

namespace {

Dims six_qubits() { return Dims{2, 2, 2, 2, 2, 2}; }

Vec random_product_state(RandomStream& rng) {
  Vec state(1);
  state.resize(1);
  state(0) = 1.0;
  for (int q = 0; q < 6; ++q) {
    Vec site(2);
    site(0) = rng.complex_normal();
    site(1) = rng.complex_normal();
    site /= site.norm();
    Vec next(state.size() * 2);
    for (Eigen::Index i = 0; i < state.size(); ++i) {
      next(2 * i) = state(i) * site(0);
      next(2 * i + 1) = state(i) * site(1);
    }
    state = next;
  }
  return state;
}

}  // namespace

TEST_CASE("pauli algebra: products, signs, commutation") {
  auto x1 = PauliString::single('X', 1);
  auto z1 = PauliString::single('Z', 1);
  REQUIRE_FALSE(x1.commutes_with(z1));
  REQUIRE(x1.commutes_with(PauliString::single('Z', 2)));

  // X Z = - Z X within the ordering convention
  auto xz = x1 * z1;
  auto zx = z1 * x1;
  REQUIRE(xz.x_mask() == zx.x_mask());
  REQUIRE(xz.negative() != zx.negative());

  // matrix-level check of the product
  REQUIRE(((x1 * z1).matrix() - x1.matrix() * z1.matrix()).cwiseAbs().maxCoeff() <
          1e-14);
  REQUIRE(((z1 * x1).matrix() - z1.matrix() * x1.matrix()).cwiseAbs().maxCoeff() <
          1e-14);
}

TEST_CASE("the six checks commute pairwise") {
  const auto& s = stabilizers();
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) REQUIRE(s[i].commutes_with(s[j]));
}

TEST_CASE("target state is stabilized by all six checks and normalized") {
  auto t = tetrahedron_state();
  REQUIRE(t.amplitudes().norm() == Catch::Approx(1.0).epsilon(1e-14));
  for (const auto& s : stabilizers()) {
    REQUIRE((s.matrix() * t.amplitudes() - t.amplitudes()).norm() < 1e-12);
  }
}

TEST_CASE("the remaining face and vertex are products of the listed checks") {
  const auto& s = stabilizers();
  auto t = tetrahedron_state().amplitudes();
  const auto face = s[0] * s[1] * s[2];
  const auto vertex = s[3] * s[4] * s[5];
  REQUIRE((face.matrix() * t - t).norm() < 1e-12);
  REQUIRE((vertex.matrix() * t - t).norm() < 1e-12);
}

TEST_CASE("bell measurements on the three pairs agree and are uniform") {
  auto t = tetrahedron_state().amplitudes();
  // project pair (1,2) and pair (3,4) onto each bell state: equal outcomes
  // carry weight 1/4, mixed outcomes vanish
  auto bell = [](int which) {
    Vec b = Vec::Zero(4);
    const double r = 1.0 / std::sqrt(2.0);
    if (which == 0) { b(0) = r; b(3) = r; }
    if (which == 1) { b(1) = r; b(2) = r; }
    if (which == 2) { b(1) = r; b(2) = -r; }
    if (which == 3) { b(0) = r; b(3) = -r; }
    return b;
  };
  for (int b1 = 0; b1 < 4; ++b1)
    for (int b2 = 0; b2 < 4; ++b2) {
      cxd weight = 0.0;
      // amplitude <b1|_{12} <b2|_{34} psi summed over the last pair
      for (int tail = 0; tail < 4; ++tail) {
        cxd amp = 0.0;
        for (int i = 0; i < 4; ++i)
          for (int j = 0; j < 4; ++j)
            amp += std::conj(bell(b1)(i)) * std::conj(bell(b2)(j)) *
                   t(i * 16 + j * 4 + tail);
        weight += std::norm(amp);
      }
      if (b1 == b2)
        REQUIRE(std::real(weight) == Catch::Approx(0.25).epsilon(1e-12));
      else
        REQUIRE(std::abs(weight) < 1e-14);
    }
}

TEST_CASE("projective measurement: eigenstate, uniform outcome, repeatability") {
  RandomStream rng(5);
  auto t = tetrahedron_state().amplitudes();
  Vec state = t;
  auto rec = measure_pauli(state, stabilizers()[0], check_sites(0), {}, rng);
  REQUIRE(rec.actual == 1);
  REQUIRE((state - t).norm() < 1e-12);

  // |+...+> gives a coin-flip outcome for a z-type check
  Vec plus = Vec::Ones(64) / 8.0;
  int ups = 0;
  for (int k = 0; k < 400; ++k) {
    Vec work = plus;
    if (measure_pauli(work, stabilizers()[0], check_sites(0), {}, rng).actual == 1)
      ++ups;
    // immediate repetition reproduces the first outcome
    RandomStream rng2(k);
    auto second = measure_pauli(work, stabilizers()[0], check_sites(0), {}, rng2);
    auto third = measure_pauli(work, stabilizers()[0], check_sites(0), {}, rng2);
    REQUIRE(second.actual == third.actual);
  }
  REQUIRE(ups > 150);
  REQUIRE(ups < 250);
}

TEST_CASE("syndromes of single flips match the decode tables") {
  // x errors flip the z-check half, and the decoded correction reverses them
  for (int q = 1; q <= 6; ++q) {
    auto err = PauliString::single('X', q);
    auto s = syndrome_of(err);
    auto corr = decode({s[0], s[1], s[2]}, ErrorType::x);
    REQUIRE(corr == err);
    auto errz = PauliString::single('Z', q);
    auto sz = syndrome_of(errz);
    auto corrz = decode({sz[3], sz[4], sz[5]}, ErrorType::z);
    REQUIRE(corrz == errz);
  }
  REQUIRE(decode({1, 1, 1}, ErrorType::x).is_identity_word());
  REQUIRE(decode({1, -1, 1}, ErrorType::x) == PauliString::single('X', 6));
}

TEST_CASE("all 64 syndrome sectors decode back to the target") {
  // any pauli word, corrected as if its syndrome came from single-site
  // errors, composes with the correction to a stabilizer
  for (int xm = 0; xm < 64; ++xm) {
    // pick an x-error pattern; its correction must cancel it modulo checks
    PauliString err;
    for (int q = 0; q < 6; ++q)
      if ((xm >> q) & 1) err = err * PauliString::single('X', q + 1);
    auto s = syndrome_of(err);
    auto corr = decode({s[0], s[1], s[2]}, ErrorType::x);
    REQUIRE(stabilizes_target(corr * err));
  }
  for (int zm = 0; zm < 64; ++zm) {
    PauliString err;
    for (int q = 0; q < 6; ++q)
      if ((zm >> q) & 1) err = err * PauliString::single('Z', q + 1);
    auto s = syndrome_of(err);
    auto corr = decode({s[3], s[4], s[5]}, ErrorType::z);
    REQUIRE(stabilizes_target(corr * err));
  }
}

TEST_CASE("the class II alternatives are equivalent") {
  // X1 X2 corrected with X3 X4 composes to a product of vertex checks
  auto e = PauliString::single('X', 1) * PauliString::single('X', 2);
  auto alt = PauliString::single('X', 3) * PauliString::single('X', 4);
  REQUIRE(stabilizes_target(alt * e));
  auto alt2 = PauliString::single('X', 5) * PauliString::single('X', 6);
  REQUIRE(stabilizes_target(alt2 * e));
}

TEST_CASE("noiseless preparation reaches the target from random inputs") {
  RandomStream rng(9);
  auto t = tetrahedron_state().amplitudes();
  for (int trial = 0; trial < 64; ++trial) {
    Vec initial = random_product_state(rng);
    auto prep = prepare_tetrahedron(initial, {}, rng);
    const double f = std::norm(t.dot(prep.state));
    REQUIRE(f == Catch::Approx(1.0).margin(1e-10));
  }
}

TEST_CASE("random reporting reduces preparation to a random stabilizer guess") {
  // with flip probability 1/2, exactly the all-correct report survives
  RandomStream rng(123, "guess");
  auto t = tetrahedron_state().amplitudes();
  MeasureNoise noise;
  noise.flip = 0.5;
  const int trials = 4000;
  double mean_f = 0.0;
  for (int k = 0; k < trials; ++k) {
    Vec initial = t;
    auto prep = prepare_tetrahedron(initial, noise, rng);
    mean_f += std::norm(t.dot(prep.state));
  }
  mean_f /= trials;
  const double sigma = std::sqrt((1.0 / 64.0) * (1.0 - 1.0 / 64.0) / trials);
  REQUIRE(std::abs(mean_f - 1.0 / 64.0) < 4.0 * sigma);
}

TEST_CASE("witness values on the target and on the maximally mixed state") {
  auto t = tetrahedron_state();
  auto w = witness(DensityOp::from_pure(t));
  REQUIRE(w.projector == Catch::Approx(-0.5).margin(1e-12));
  REQUIRE(w.two_setting == Catch::Approx(-0.5).margin(1e-12));
  REQUIRE(w.fidelity == Catch::Approx(1.0).margin(1e-12));

  DensityOp mixed(six_qubits(), Mat::Identity(64, 64) / 64.0);
  auto wm = witness(mixed);
  REQUIRE(wm.projector == Catch::Approx(0.5 - 1.0 / 64.0).margin(1e-12));
  REQUIRE(wm.two_setting == Catch::Approx(1.5 - 0.125 - 0.125).margin(1e-12));
}

TEST_CASE("two-setting witness never claims more than the projector form") {
  RandomStream rng(77);
  for (int trial = 0; trial < 1000; ++trial) {
    Vec v = haar_state(64, rng);
    auto w = witness(DensityOp::from_pure(qcore::PureState(six_qubits(), v)));
    REQUIRE(w.two_setting >= w.projector - 1e-10);
  }
}

TEST_CASE("first-order witness estimate matches exact noise enumeration") {
  // exact pauli-frame enumeration over readout flips and backaction errors
  const double pm = 0.01, p1 = 0.004, p2 = 0.006;
  const std::array<int, 6> order = {3, 4, 5, 0, 1, 2};

  double expectation = 0.0;  // E[fidelity indicator]
  // enumerate backaction patterns (4 options per check) and flip patterns
  for (int flips = 0; flips < 64; ++flips) {
    double pflip = 1.0;
    for (int i = 0; i < 6; ++i)
      pflip *= ((flips >> i) & 1) ? pm : (1.0 - pm);
    for (int back = 0; back < 4096; ++back) {
      double pback = 1.0;
      PauliString frame;  // accumulated error relative to the target
      std::array<int, 6> reported{};
      int code = back;
      for (int step = 0; step < 6; ++step) {
        const int i = order[step];
        // true outcome from commutation of the check with the current frame
        const auto& chk = stabilizers()[i];
        const int anti = (__builtin_popcount(chk.x_mask() & frame.z_mask()) +
                          __builtin_popcount(chk.z_mask() & frame.x_mask())) %
                         2;
        int outcome = anti ? -1 : 1;
        if ((flips >> i) & 1) outcome = -outcome;
        reported[i] = outcome;
        // backaction after the check
        const int pattern = code % 4;
        code /= 4;
        const bool xtype = chk.z_mask() == 0;
        const char letter = xtype ? 'X' : 'Z';
        const auto sites = check_sites(i);
        double pw = 1.0;
        PauliString extra;
        if (pattern & 1) extra = extra * PauliString::single(letter, sites[1]) *
                                 PauliString::single(letter, sites[2]);
        pw *= (pattern & 1) ? p1 : (1.0 - p1);
        if (pattern & 2) extra = extra * PauliString::single(letter, sites[2]);
        pw *= (pattern & 2) ? p2 : (1.0 - p2);
        pback *= pw;
        frame = extra * frame;
      }
      const auto cx = decode({reported[0], reported[1], reported[2]}, ErrorType::x);
      const auto cz = decode({reported[3], reported[4], reported[5]}, ErrorType::z);
      const PauliString net = cx * cz * frame;
      if (stabilizes_target(net)) expectation += pflip * pback;
    }
  }
  const double exact_witness = 0.5 - expectation;
  const double estimate = witness_estimate(pm, p1, p2);
  const double psum = pm + p1 + p2;
  REQUIRE(exact_witness == Catch::Approx(estimate).margin(40.0 * psum * psum));
}

TEST_CASE("cooperative teleportation is exact on every branch") {
  RandomStream rng(31);
  for (int trial = 0; trial < 12; ++trial) {
    Vec v = haar_state(4, rng);
    TeleportInput in{v(0), v(1), v(2), v(3)};
    for (int a1 = 0; a1 < 4; ++a1)
      for (int a2 = 0; a2 < 4; ++a2) {
        auto out = controlled_teleport(in, true, rng, std::array<int, 2>{a1, a2});
        REQUIRE(out.fidelity == Catch::Approx(1.0).margin(1e-10));
      }
  }
}

TEST_CASE("uncooperative fidelity for a plain bell input matches the trace") {
  RandomStream rng(14);
  TeleportInput in{1.0, 0.0, 0.0, 0.0};
  for (int a1 = 0; a1 < 4; ++a1) {
    auto out = controlled_teleport(in, false, rng, std::array<int, 2>{a1, 0});
    // for a bell-basis input the reduced state has overlap sum |c_i|^4 = 1
    REQUIRE(out.fidelity == Catch::Approx(1.0).margin(1e-10));
  }
}

TEST_CASE("uncooperative haar average approaches two fifths") {
  auto avg = average_fidelity(3000, false, 424242);
  REQUIRE(average_fidelity_exact_noncooperative() == Catch::Approx(0.4));
  REQUIRE(std::abs(avg.mean - 0.4) < 4.0 * avg.stderr_mean + 1e-3);
}

TEST_CASE("teleportation outputs stay in the bell-diagonal span") {
  RandomStream rng(8);
  Vec v = haar_state(4, rng);
  TeleportInput in{v(0), v(1), v(2), v(3)};
  // without cooperation, Bob's reduced state is diagonal in the bell basis
  for (int a1 = 0; a1 < 4; ++a1)
    for (int a2 = 0; a2 < 4; ++a2) {
      auto out = controlled_teleport(in, false, rng, std::array<int, 2>{a1, a2});
      REQUIRE(out.fidelity >= std::pow(std::abs(v(0)), 4) - 1e-9);
    }
}

TEST_CASE("haar sampler uniformity: mean pairwise overlap is 1/d") {
  RandomStream rng(4242, "haar-check");
  const int d = 4, n = 4000;
  std::vector<Vec> states;
  for (int k = 0; k < n; ++k) states.push_back(haar_state(d, rng));
  double acc = 0.0;
  int count = 0;
  for (int k = 1; k < n; ++k) {
    acc += std::norm(states[k - 1].dot(states[k]));
    ++count;
  }
  acc /= count;
  REQUIRE(acc == Catch::Approx(1.0 / d).margin(0.02));
}
