#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cavkit/cavkit.hpp"

namespace qsim {

using json = nlohmann::json;
using namespace cavkit;

inline const char* version() { return "0.1.0"; }

// ---- configuration ---------------------------------------------------------------

struct ParamSpec {
  std::string name;
  std::string type;  // "number", "integer", "boolean", "list" (comma numbers)
  std::string default_value;
  std::string help;
};

class Config {
 public:
  std::uint64_t seed = 1;
  bool fast = true;
  std::string out_dir = ".";
  bool want_svg = false;

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  double number(const std::string& key) const { return std::stod(at(key)); }
  int integer(const std::string& key) const { return std::stoi(at(key)); }
  bool boolean(const std::string& key) const {
    const std::string v = at(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config: bad boolean for " + key);
  }
  std::vector<double> list(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(at(key));
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
    if (out.empty()) throw std::invalid_argument("config: empty list for " + key);
    return out;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  const std::string& at(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end())
      throw std::invalid_argument("config: missing parameter " + key);
    return it->second;
  }
  std::map<std::string, std::string> values_;
};

// ---- results ----------------------------------------------------------------------

struct ResultTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::map<std::string, std::string> metadata;

  void add_row(std::initializer_list<double> vals) {
    std::vector<double> r(vals);
    if (r.size() != columns.size())
      throw std::logic_error("ResultTable: column mismatch");
    for (double v : r)
      if (!std::isfinite(v)) throw numerical_error("ResultTable: nonfinite value");
    rows.push_back(std::move(r));
  }

  std::string to_csv() const {
    std::string out;
    for (const auto& [k, v] : metadata) out += "# " + k + "=" + v + "\n";
    for (std::size_t c = 0; c < columns.size(); ++c)
      out += columns[c] + (c + 1 < columns.size() ? "," : "\n");
    char buf[40];
    for (const auto& row : rows) {
      for (std::size_t c = 0; c < row.size(); ++c) {
        std::snprintf(buf, sizeof buf, "%.11e", row[c]);
        out += buf;
        out += (c + 1 < row.size() ? ',' : '\n');
      }
    }
    return out;
  }

  /// Minimal line chart of every column against the first one.
  std::string to_svg() const {
    if (rows.size() < 2 || columns.size() < 2) return "";
    const int w = 720, h = 480, ml = 70, mb = 40, mt = 20, mr = 20;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& r : rows) {
      xmin = std::min(xmin, r[0]);
      xmax = std::max(xmax, r[0]);
      for (std::size_t c = 1; c < r.size(); ++c) {
        ymin = std::min(ymin, r[c]);
        ymax = std::max(ymax, r[c]);
      }
    }
    if (xmax == xmin || ymax == ymin) return "";
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
    auto py = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mb - mt); };
    static const char* colors[] = {"#1b6ca8", "#c0392b", "#27a844", "#8e44ad",
                                   "#d68910", "#148f77"};
    std::ostringstream s;
    s << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h
      << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    s << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr << "' y2='"
      << h - mb << "' stroke='black'/>\n";
    s << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << h - mb
      << "' stroke='black'/>\n";
    for (std::size_t c = 1; c < columns.size(); ++c) {
      s << "<polyline fill='none' stroke='" << colors[(c - 1) % 6]
        << "' stroke-width='1.5' points='";
      for (const auto& r : rows) s << px(r[0]) << "," << py(r[c]) << " ";
      s << "'/>\n";
      s << "<text x='" << w - mr - 150 << "' y='" << mt + 16 * c << "' fill='"
        << colors[(c - 1) % 6] << "' font-size='12'>" << columns[c] << "</text>\n";
    }
    s << "<text x='" << (w + ml) / 2 << "' y='" << h - 8
      << "' font-size='12' text-anchor='middle'>" << columns[0] << "</text>\n";
    s << "</svg>\n";
    return s.str();
  }
};

// ---- registry -----------------------------------------------------------------------

struct Experiment {
  std::string name;
  std::string summary;
  std::string reproduces;  // which quantitative results the run regenerates
  double fast_budget_s;
  std::vector<ParamSpec> params;
  std::function<ResultTable(const Config&)> run;
};

inline std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = a + (b - a) * i / (n - 1.0);
  return g;
}

/// Deterministic ordered parallel map over an index range.
template <class F>
auto parallel_map(int n, F&& f) {
  using R = decltype(f(0));
  std::vector<R> out(n);
  const int workers =
      std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(), 8));
  std::vector<std::future<void>> futs;
  std::atomic<int> next{0};
  for (int w = 0; w < workers; ++w)
    futs.push_back(std::async(std::launch::async, [&] {
      for (int k = next.fetch_add(1); k < n; k = next.fetch_add(1)) out[k] = f(k);
    }));
  for (auto& fu : futs) fu.get();
  return out;
}

inline std::vector<Experiment> build_registry();

inline const std::vector<Experiment>& registry() {
  static const std::vector<Experiment> reg = build_registry();
  return reg;
}

inline const Experiment& find_experiment(const std::string& name) {
  for (const auto& e : registry())
    if (e.name == name) return e;
  throw std::invalid_argument("unknown experiment: " + name);
}

/// Apply defaults, then overrides; reject unknown parameter names.
inline Config resolve_config(const Experiment& exp,
                             const std::map<std::string, std::string>& overrides,
                             std::uint64_t seed, bool fast) {
  Config cfg;
  cfg.seed = seed;
  cfg.fast = fast;
  for (const auto& p : exp.params) cfg.set(p.name, p.default_value);
  for (const auto& [k, v] : overrides) {
    bool known = false;
    for (const auto& p : exp.params) known = known || p.name == k;
    if (!known)
      throw std::invalid_argument("unknown parameter '" + k + "' for experiment " +
                                  exp.name);
    cfg.set(k, v);
  }
  return cfg;
}

inline json registry_json() {
  json out = json::array();
  for (const auto& e : registry()) {
    json params = json::array();
    for (const auto& p : e.params)
      params.push_back({{"name", p.name},
                        {"type", p.type},
                        {"default", p.default_value},
                        {"help", p.help}});
    out.push_back({{"name", e.name},
                   {"summary", e.summary},
                   {"reproduces", e.reproduces},
                   {"fast_budget_s", e.fast_budget_s},
                   {"params", params}});
  }
  return out;
}

// ---- experiment implementations ------------------------------------------------------

namespace impl {

inline ResultTable dispersive_phase(const Config& c) {
  ResultTable t;
  t.columns = {"chi_over_kappa", "phase_up", "phase_down", "phase_difference"};
  const double kappa = c.number("kappa");
  for (double x : linspace(c.number("chi-min"), c.number("chi-max"),
                           c.integer("points"))) {
    auto rp = cqed::dispersive_reflection(0.0, 0.0, x * kappa, kappa, 0.0, 1);
    auto rm = cqed::dispersive_reflection(0.0, 0.0, x * kappa, kappa, 0.0, -1);
    double diff = std::abs(rp.phase - rm.phase);
    if (diff > pi) diff = 2.0 * pi - diff;
    t.add_row({x, rp.phase, rm.phase, diff});
  }
  return t;
}

inline ResultTable rabi_oscillation(const Config& c) {
  using namespace dynamics;
  const double g = c.number("g");
  const int nc = c.integer("cavity-levels");
  qcore::Dims dims{2, nc};
  Mat sp(2, 2);
  sp << 0, 1, 0, 0;
  Mat ex = kron(sp, qcore::destroy(nc).matrix());
  ex += ex.adjoint().eval();
  OpenSystem sys;
  sys.dims = dims;
  sys.hamiltonian = TimeDependentOp(qcore::LinOp(dims, g * ex));
  Vec psi = Vec::Zero(2 * nc);
  psi(0) = 1.0;
  auto grid = linspace(0.0, c.number("t-max") / g, c.integer("points"));
  IntegratorConfig icfg;
  icfg.rtol = 1e-9;
  icfg.atol = 1e-12;
  auto traj = evolve(sys, qcore::DensityOp::from_pure(qcore::PureState(dims, psi)),
                     grid, icfg);
  Mat proj = kron((Mat(2, 2) << 1, 0, 0, 0).finished(), Mat::Identity(nc, nc));
  ResultTable t;
  t.columns = {"g_t", "p_excited", "reference_cos2"};
  for (std::size_t k = 0; k < grid.size(); ++k)
    t.add_row({g * grid[k], std::real((proj * traj[k].matrix()).trace()),
               sq(std::cos(g * grid[k]))});
  return t;
}

inline ResultTable vacuum_rabi(const Config& c) {
  cqed::CavityQubitParams p;
  p.cavity_freq = 0.0;
  p.qubit_freq = c.number("detuning");
  p.g = c.number("g");
  p.kappa_in = p.kappa_out = 0.5 * c.number("kappa");
  p.gamma2 = c.number("gamma2");
  ResultTable t;
  t.columns = {"omega", "transmission_sq", "transmission_re", "transmission_im"};
  t.metadata["transmission_convention"] = cqed::transmission_convention();
  for (double w : linspace(-c.number("span"), c.number("span"), c.integer("points"))) {
    const cxd tr = cqed::vacuum_rabi_transmission(w, p);
    t.add_row({w, std::norm(tr), tr.real(), tr.imag()});
  }
  return t;
}

inline ResultTable longitudinal_displacement(const Config& c) {
  const double wc = c.number("cavity-freq"), kappa = c.number("kappa"),
               gz = c.number("gz");
  auto g = [=](double t) { return gz * std::cos(wc * t); };
  auto grid = linspace(1e-3 / kappa, c.number("t-max") / kappa, c.integer("points"));
  auto traj = cqed::longitudinal_trajectory(grid, g, wc, kappa, 1);
  ResultTable t;
  t.columns = {"kappa_t", "displacement_abs", "saturation"};
  for (std::size_t k = 0; k < grid.size(); ++k)
    t.add_row({kappa * grid[k], std::abs(traj[k]), gz / kappa});
  return t;
}

inline ResultTable filter_functions(const Config& c) {
  const int n = c.integer("pulses");
  const double tau = c.number("tau");
  auto seq = n == 0 ? spectroscopy::PulseSequence::free_induction(tau)
                    : spectroscopy::PulseSequence::cpmg(n, tau);
  const double t = seq.duration();
  ResultTable tab;
  tab.columns = {"omega", "filter_classical", "filter_quantum"};
  for (double w : linspace(0.0, c.number("omega-max"), c.integer("points")))
    tab.add_row({w,
                 spectroscopy::filter_function(spectroscopy::FilterKind::classical,
                                               seq, w, t),
                 spectroscopy::filter_function(spectroscopy::FilterKind::quantum,
                                               seq, w, t)});
  return tab;
}

inline ResultTable coherence_decay(const Config& c) {
  // lorentzian-regularized flat spectrum plus optional quasistatic peak
  const double s0 = c.number("white-level"), cutoff = c.number("cutoff");
  const double quasi = c.number("quasistatic-var"), sigma = c.number("quasistatic-width");
  auto spec = spectroscopy::NoiseSpectrum::classical_only([=](double w) {
    double v = s0 / (1.0 + sq(w / cutoff));
    if (quasi > 0.0)
      v += pi * quasi * std::exp(-0.5 * sq(w / sigma)) / (sigma * std::sqrt(2.0 * pi));
    return v;
  });
  ResultTable t;
  t.columns = {"time", "chi", "white_reference", "quasistatic_reference"};
  for (double time : linspace(c.number("t-min"), c.number("t-max"), c.integer("points"))) {
    auto r = spectroscopy::coherence_functional(
        spectroscopy::PulseSequence::free_induction(time), spec, time,
        quasi > 0.0 ? 30.0 * sigma : 0.0);
    t.add_row({time, r.chi, 0.5 * s0 * time, 0.25 * quasi * sq(time)});
  }
  return t;
}

inline ResultTable spin_echo_envelope(const Config& c) {
  spectroscopy::SingleSpinEnv env{c.number("hyperfine"), c.number("zeeman-x"),
                                  c.number("zeeman-z"), c.number("gamma-phi")};
  ResultTable t;
  t.columns = {"tau", "echo_re", "echo_im"};
  t.metadata["visibility"] = std::to_string(sq(std::sin(env.delta_phi())));
  for (double tau : linspace(c.number("tau-min"), c.number("tau-max"),
                             c.integer("points"))) {
    const cxd e = spectroscopy::single_spin_echo(tau, env);
    t.add_row({tau, e.real(), e.imag()});
  }
  return t;
}

inline ResultTable purcell_envelope_exp(const Config& c) {
  spectroscopy::PurcellParams p{c.number("g"),   c.number("kappa"),
                                c.number("detuning"), c.number("t2star"),
                                c.number("tau"), 0};
  ResultTable t;
  t.columns = {"echo_index", "exact", "stretched_asymptote"};
  t.metadata["gamma_p_inverse_over_tau"] = std::to_string(1.0 / (p.gamma_p() * p.tau));
  for (double n : c.list("echo-list")) {
    auto env = spectroscopy::purcell_envelope(static_cast<int>(n), p);
    t.add_row({n, env.exact, env.asymptote});
  }
  return t;
}

inline ResultTable transient_roundtrip(const Config& c) {
  RandomStream rng(c.seed, "transient");
  const int n = c.integer("echoes");
  spectroscopy::TransientSpectrum ts;
  ts.tau = c.number("tau");
  ts.qubit_freq = c.number("qubit-freq");
  ts.kappa = c.number("kappa");
  ts.g = c.number("g");
  ts.t2star = c.number("t2star");
  ts.envelope.resize(n + 1);
  ts.gbar.resize(n + 1);
  ts.envelope[0] = 1.0;
  ts.gbar[0] = 1.0;
  for (int k = 1; k <= n; ++k) {
    ts.envelope[k] = 0.3 * rng.complex_normal();
    ts.gbar[k] = rng.uniform(0.1, 1.0);
  }
  std::vector<cxd> resp(n + 1);
  for (int k = 0; k <= n; ++k)
    resp[k] = ts.forward(2.0 * pi * k / ((n + 1) * ts.tau));
  auto rec = spectroscopy::TransientSpectrum::invert(resp, ts.gbar, ts.tau,
                                                     ts.qubit_freq, ts.kappa, ts.g,
                                                     ts.t2star);
  ResultTable t;
  t.columns = {"echo_index", "envelope_re", "recovered_re", "recovery_error"};
  for (int k = 0; k <= n; ++k)
    t.add_row({double(k), ts.envelope[k].real(), rec[k].real(),
               std::abs(rec[k] - ts.envelope[k])});
  return t;
}

inline ResultTable signal_bounds_exp(const Config& c) {
  spectroscopy::SignalParams p;
  p.g = c.number("g");
  p.t2star = c.number("t2star");
  p.kappa = c.number("kappa");
  p.tau = c.number("tau");
  ResultTable t;
  t.columns = {"kappa_out_fraction", "hahn", "cpmg", "pulsed"};
  for (double f : linspace(0.0, 1.0, c.integer("points"))) {
    p.kappa_out = f * p.kappa;
    t.add_row({f, spectroscopy::signal_bound(spectroscopy::SignalMode::hahn, p),
               spectroscopy::signal_bound(spectroscopy::SignalMode::cpmg, p),
               spectroscopy::signal_bound(spectroscopy::SignalMode::pulsed, p)});
  }
  return t;
}

inline ResultTable whichpath_fidelity(const Config& c) {
  ResultTable t;
  t.columns = {"kappa_tau", "fidelity_exact", "fidelity_expansion"};
  const double alpha = c.number("alpha");
  t.metadata["photon_budget_reference"] = std::to_string(
      std::pow(2.0 * pi * c.number("drive-mhz") * 1e6 * c.number("budget-tau"), 1.6));
  for (double kt : c.list("kappa-tau-list")) {
    cqed::GaussianPulse u{1.0, 0.0};
    auto r = cqed::whichpath_scattering(u, alpha, 0.5 * kt, 0.5 * kt, 0);
    t.add_row({kt, r.fidelity_exact, r.fidelity_gaussian});
  }
  return t;
}

inline ResultTable qwp_concurrence_exp(const Config& c) {
  ResultTable t;
  t.columns = {"photons", "concurrence"};
  const double p = c.number("loss"), eta = c.number("efficiency");
  for (double n : linspace(c.number("n-min"), c.number("n-max"), c.integer("points")))
    t.add_row({n, cqed::qwp_concurrence(n, p, eta, 0.0)});
  return t;
}

inline ResultTable fisher_sweep(const Config& c) {
  using namespace metrology;
  const std::string state = c.has("state") ? "" : "";
  const ProbeKind kind =
      c.boolean("use-ecs") ? ProbeKind::ecs : ProbeKind::qwp;
  const Scheme scheme =
      c.boolean("use-counting") ? Scheme::counting : Scheme::homodyne;
  ChannelParams ch;
  ch.loss = c.number("p");
  const double nbar = c.number("nbar");
  const double alpha = inverse_amplitude(kind, nbar);
  const double iq = quantum_fisher_info(kind, nbar, ch);
  const int points = c.fast ? std::min(10, c.integer("phi-points"))
                            : c.integer("phi-points");
  auto phis = linspace(0.06, pi - 0.06, points);
  auto rows = parallel_map(points, [&](int k) {
    return classical_fisher_info(scheme, kind, phis[k], alpha, ch);
  });
  ResultTable t;
  t.columns = {"phi", "fisher_classical", "fisher_quantum"};
  for (int k = 0; k < points; ++k) t.add_row({phis[k], rows[k], iq});
  return t;
}

inline ResultTable mle_consistency(const Config& c) {
  using namespace metrology;
  const double nbar = c.number("nbar");
  const double truth = c.number("phi");
  const int reps = c.fast ? std::min(20, c.integer("reps")) : c.integer("reps");
  const int samples = c.fast ? std::min(2000, c.integer("samples"))
                             : c.integer("samples");
  OutcomeModel model(Scheme::homodyne, ProbeKind::qwp, std::sqrt(nbar), {});
  auto ests = parallel_map(reps, [&](int r) {
    RandomStream rng(c.seed, "mle-rep-" + std::to_string(r));
    std::vector<HomodyneOutcome> obs;
    obs.reserve(samples);
    for (int k = 0; k < samples; ++k) obs.push_back(model.sample_homodyne(truth, rng));
    return mle_phase(obs, model, truth - 0.35, truth + 0.35).estimate;
  });
  double mean = 0.0, m2 = 0.0;
  for (double e : ests) {
    mean += e;
    m2 += e * e;
  }
  mean /= reps;
  const double var = m2 / reps - mean * mean;
  const double crb = 1.0 / (samples * quantum_fisher_info(ProbeKind::qwp, nbar));
  ResultTable t;
  t.columns = {"repetitions", "samples", "mean_estimate", "variance", "crb_variance",
               "ratio"};
  t.add_row({double(reps), double(samples), mean, var, crb, var / crb});
  return t;
}

inline ResultTable flyingcat_tradeoff(const Config& c) {
  const double eta = c.number("eta");
  auto tr = flyingcat::total_error(eta, eta);
  ResultTable t;
  t.columns = {"alpha", "total_error"};
  t.metadata["alpha_optimal"] = std::to_string(tr.alpha_opt);
  t.metadata["error_optimal"] = std::to_string(tr.p_opt);
  for (double a : linspace(0.1, c.number("alpha-max"), c.integer("points")))
    t.add_row({a, tr.total_error(a)});
  return t;
}

inline ResultTable ghz_fidelity(const Config& c) {
  const double eta = c.number("eta");
  ResultTable t;
  t.columns = {"alpha", "fidelity", "total_error"};
  for (double a : linspace(0.2, c.number("alpha-max"), c.integer("points"))) {
    auto g = flyingcat::ghz_prepare(a, eta, eta);
    t.add_row({a, 1.0 - g.total_error, g.total_error});
  }
  return t;
}

inline ResultTable feasibility_exp(const Config& c) {
  flyingcat::FeasibilityParams fp;
  fp.chi = 2.0 * pi * c.number("chi-mhz") * 1e6;
  fp.kappa0 = 2.0 * std::abs(fp.chi);
  fp.kappa_int = 2.0 * pi * c.number("kappa-int-mhz") * 1e6;
  fp.tau = c.number("tau-ns") * 1e-9;
  fp.t2star = c.number("t2star-us") * 1e-6;
  fp.eta_trans = c.number("eta-trans");
  fp.eta_circ = c.number("eta-circ");
  auto r = flyingcat::feasibility(fp, c.number("alpha"));
  ResultTable t;
  t.columns = {"bandwidth_term", "internal_term", "reflect_exact", "reflect_approx",
               "qubit_term", "eta_total"};
  t.add_row({r.bandwidth_term, r.internal_term, r.eps_reflect_exact,
             r.eps_reflect_approx, r.eps_qubit, r.eta_total});
  return t;
}

inline ResultTable tetra_witness(const Config& c) {
  const double pm = c.number("p-measure"), p1 = c.number("p1"), p2 = c.number("p2");
  ResultTable t;
  t.columns = {"scale", "witness_estimate"};
  for (double s : linspace(0.0, 1.0, c.integer("points")))
    t.add_row({s, stabnet::witness_estimate(s * pm, s * p1, s * p2)});
  return t;
}

inline ResultTable tetra_teleport(const Config& c) {
  const int samples = c.fast ? std::min(1000, c.integer("samples"))
                             : c.integer("samples");
  auto avg = stabnet::average_fidelity(samples, c.boolean("cooperate"), c.seed);
  ResultTable t;
  t.columns = {"samples", "mean_fidelity", "stderr", "exact_noncooperative"};
  t.add_row({double(samples), avg.mean, avg.stderr_mean,
             stabnet::average_fidelity_exact_noncooperative()});
  return t;
}

inline ResultTable timebin_gate(const Config& c) {
  auto kts = c.list("kappa-tau-list");
  if (c.fast && kts.size() > 2) kts.resize(2);
  const double kappa = 2.0 * pi * c.number("kappa-mhz") * 1e6;
  auto rows = parallel_map(static_cast<int>(kts.size()), [&](int k) {
    timebin::GateConfig cfg;
    cfg.kappa = kappa;
    cfg.tau = kts[k] / kappa;
    cfg.n_max = c.integer("n-max");
    cfg.gamma = c.number("gamma");
    auto f = timebin::gate_fidelity(timebin::reconstruct_channel(cfg, 1e-7));
    return std::array<double, 3>{f.error, f.loss_inclusive_error, f.mean_success};
  });
  ResultTable t;
  t.columns = {"kappa_tau", "error_postselected", "error_with_herald", "success"};
  for (std::size_t k = 0; k < kts.size(); ++k)
    t.add_row({kts[k], rows[k][0], rows[k][1], rows[k][2]});
  if (kts.size() >= 2) {
    const auto& a = t.rows.front();
    const auto& b = t.rows.back();
    t.metadata["herald_error_slope"] = std::to_string(
        std::log(b[2] / a[2]) / std::log(b[0] / a[0]));
  }
  return t;
}

inline ResultTable timebin_scaling(const Config& c) {
  const double kappa = 2.0 * pi * c.number("kappa-mhz") * 1e6;
  auto t1s = c.list("t1-list");
  ResultTable t;
  t.columns = {"t1_s", "tau_opt_s", "eps_min", "xi_fit", "zeta_fit"};
  if (c.boolean("synthetic")) {
    std::vector<double> taus;
    for (double kt = 2.0; kt < 400.0; kt *= 1.3) taus.push_back(kt / kappa);
    auto sweep = timebin::scaling_sweep(
        t1s, taus, kappa,
        [&](double tau, double t1) {
          return timebin::synthetic_error_model(tau, t1, kappa, c.number("model-a"),
                                                c.number("model-b"));
        },
        true);
    for (const auto& p : sweep.points)
      t.add_row({p.t1, p.tau_opt, p.eps_min, sweep.xi_fit, sweep.zeta_fit});
    return t;
  }
  // simulated sweep: the loss-inclusive gate error on a bandwidth grid
  auto kt_grid = c.list("kappa-tau-grid");
  struct Key {
    double tau, t1;
  };
  std::vector<Key> keys;
  for (double t1 : t1s)
    for (double kt : kt_grid) keys.push_back({kt / kappa, t1});
  auto errs = parallel_map(static_cast<int>(keys.size()), [&](int k) {
    timebin::GateConfig cfg;
    cfg.kappa = kappa;
    cfg.tau = keys[k].tau;
    cfg.n_max = c.integer("n-max");
    cfg.gamma = 1.0 / keys[k].t1;
    auto f = timebin::gate_fidelity(timebin::reconstruct_channel(cfg, 2e-7));
    return f.loss_inclusive_error;
  });
  std::map<double, std::map<double, double>> table;  // t1 -> tau -> eps
  for (std::size_t k = 0; k < keys.size(); ++k)
    table[keys[k].t1][keys[k].tau] = errs[k];
  std::vector<double> taus;
  for (double kt : kt_grid) taus.push_back(kt / kappa);
  auto sweep = timebin::scaling_sweep(
      t1s, taus, kappa,
      [&](double tau, double t1) {
        auto& row = table[t1];
        auto it = row.find(tau);
        if (it != row.end()) return it->second;
        timebin::GateConfig cfg;
        cfg.kappa = kappa;
        cfg.tau = tau;
        cfg.n_max = c.integer("n-max");
        cfg.gamma = 1.0 / t1;
        auto f = timebin::gate_fidelity(timebin::reconstruct_channel(cfg, 2e-7));
        row[tau] = f.loss_inclusive_error;
        return f.loss_inclusive_error;
      },
      false);
  for (const auto& p : sweep.points)
    t.add_row({p.t1, p.tau_opt, p.eps_min, sweep.xi_fit, sweep.zeta_fit});
  return t;
}

inline ResultTable loss_backaction_exp(const Config& c) {
  timebin::Waveform u{c.number("tau"), 0.0};
  timebin::GaussianBath bath{c.number("coupling"), c.number("bandwidth"),
                             c.number("mean-detuning")};
  ResultTable t;
  t.columns = {"tau_sep_over_tau", "coherence_abs", "dephasing_eta", "loss_q"};
  for (double r : linspace(0.0, c.number("sep-max"), c.integer("points"))) {
    auto lb = timebin::loss_backaction(bath, u, r * u.tau);
    t.add_row({r, std::abs(lb.coherence), lb.eta(), lb.q});
  }
  return t;
}

}  // namespace impl

inline std::vector<Experiment> build_registry() {
  std::vector<Experiment> reg;
  auto num = [](std::string n, std::string d, std::string h) {
    return ParamSpec{std::move(n), "number", std::move(d), std::move(h)};
  };
  auto integer = [](std::string n, std::string d, std::string h) {
    return ParamSpec{std::move(n), "integer", std::move(d), std::move(h)};
  };
  auto boolean = [](std::string n, std::string d, std::string h) {
    return ParamSpec{std::move(n), "boolean", std::move(d), std::move(h)};
  };
  auto list = [](std::string n, std::string d, std::string h) {
    return ParamSpec{std::move(n), "list", std::move(d), std::move(h)};
  };

  reg.push_back({"dispersive-phase",
                 "Conditioned reflection phase of a single-port cavity",
                 "pi phase contrast at the matched dispersive shift",
                 1.0,
                 {num("kappa", "1.0", "port coupling"),
                  num("chi-min", "0.05", "smallest shift over kappa"),
                  num("chi-max", "2.0", "largest shift over kappa"),
                  integer("points", "80", "sweep points")},
                 impl::dispersive_phase});
  reg.push_back({"rabi-oscillation",
                 "Excited-state population under resonant exchange coupling",
                 "cos^2 exchange oscillation of the one-excitation ladder",
                 5.0,
                 {num("g", "1.0", "coupling"),
                  integer("cavity-levels", "3", "cavity truncation"),
                  num("t-max", "6.0", "duration in units of 1/g"),
                  integer("points", "200", "grid points")},
                 impl::rabi_oscillation});
  reg.push_back({"vacuum-rabi-transmission",
                 "Weak-drive transmission of the hybridized cavity-qubit pair",
                 "split transmission doublet at +-g with widths kappa/2",
                 1.0,
                 {num("g", "1.0", "coupling"), num("kappa", "0.1", "total linewidth"),
                  num("detuning", "0.0", "qubit-cavity detuning"),
                  num("gamma2", "0.0", "qubit dephasing"),
                  num("span", "2.0", "frequency span"),
                  integer("points", "400", "sweep points")},
                 impl::vacuum_rabi});
  reg.push_back({"longitudinal-displacement",
                 "Cavity displacement under a modulated longitudinal coupling",
                 "steady displacement g/kappa under resonant modulation",
                 2.0,
                 {num("cavity-freq", "50.0", "carrier frequency"),
                  num("kappa", "1.0", "cavity linewidth"),
                  num("gz", "0.08", "modulation amplitude"),
                  num("t-max", "12.0", "duration in units of 1/kappa"),
                  integer("points", "60", "grid points")},
                 impl::longitudinal_displacement});
  reg.push_back({"filter-functions",
                 "Classical and quantum filter functions of a pulse train",
                 "echo-train filter shapes and refocusing zeros",
                 1.0,
                 {integer("pulses", "4", "number of pi pulses (0 = free decay)"),
                  num("tau", "1.0", "pulse spacing"),
                  num("omega-max", "20.0", "frequency span"),
                  integer("points", "500", "sweep points")},
                 impl::filter_functions});
  reg.push_back({"coherence-decay",
                 "Coherence exponent from filtered spectral quadratures",
                 "linear white-noise decay and quadratic quasistatic decay",
                 20.0,
                 {num("white-level", "0.5", "flat spectral level"),
                  num("cutoff", "2e4", "regularization cutoff"),
                  num("quasistatic-var", "0.0", "low-frequency variance"),
                  num("quasistatic-width", "1e-3", "low-frequency peak width"),
                  num("t-min", "0.2", "first time"), num("t-max", "2.0", "last time"),
                  integer("points", "8", "time points")},
                 impl::coherence_decay});
  reg.push_back({"spin-echo-envelope",
                 "Hahn-echo envelope for a single environment spin",
                 "echo modulation at the two branch frequencies",
                 1.0,
                 {num("hyperfine", "-1.5708e6", "secular coupling"),
                  num("zeeman-x", "-0.7854e6", "transverse field"),
                  num("zeeman-z", "-0.7854e6", "longitudinal field"),
                  num("gamma-phi", "1e4", "extra dephasing rate"),
                  num("tau-min", "1e-7", "first delay"),
                  num("tau-max", "4e-5", "last delay"),
                  integer("points", "400", "sweep points")},
                 impl::spin_echo_envelope});
  reg.push_back({"purcell-envelope",
                 "Inhomogeneously broadened echo suppression",
                 "stretched-exponential echo decay and its exact average",
                 5.0,
                 {num("g", "0.1", "cavity coupling"), num("kappa", "1.0", "linewidth"),
                  num("detuning", "0.0", "cavity-qubit detuning"),
                  num("t2star", "0.1", "inhomogeneous dephasing time"),
                  num("tau", "10.0", "pulse spacing"),
                  list("echo-list", "1,10,100,1000,4000,18000", "echo indices")},
                 impl::purcell_envelope_exp});
  reg.push_back({"transient-roundtrip",
                 "Stationary-response forward map and envelope inversion",
                 "exact recovery of the echo envelope from the response comb",
                 1.0,
                 {integer("echoes", "12", "number of echoes"),
                  num("tau", "1.0", "pulse spacing"),
                  num("qubit-freq", "13.7", "bare splitting"),
                  num("kappa", "1.0", "cavity linewidth"),
                  num("g", "0.05", "coupling"),
                  num("t2star", "0.08", "inhomogeneous time")},
                 impl::transient_roundtrip});
  reg.push_back({"signal-bounds",
                 "Per-cycle signal limits for echo readout through the cavity",
                 "hahn, train, and pulsed-coupling signal ceilings",
                 1.0,
                 {num("g", "0.05", "coupling"), num("t2star", "0.1", "dephasing time"),
                  num("kappa", "1.0", "linewidth"), num("tau", "10.0", "pulse spacing"),
                  integer("points", "60", "sweep points")},
                 impl::signal_bounds_exp});
  reg.push_back({"whichpath-fidelity",
                 "Finite-bandwidth routing fidelity of the pulse router",
                 "inverse-quartic bandwidth correction and the photon budget",
                 1.0,
                 {num("alpha", "1.5", "pulse amplitude"),
                  list("kappa-tau-list", "10,20,40,80", "bandwidth products"),
                  num("drive-mhz", "1.0", "drive amplitude for the budget"),
                  num("budget-tau", "1e-6", "pulse duration for the budget")},
                 impl::whichpath_fidelity});
  reg.push_back({"qwp-concurrence",
                 "Distributed-entanglement concurrence after field readout",
                 "optimal photon number and sudden death under loss",
                 1.0,
                 {num("loss", "0.01", "per-photon loss"),
                  num("efficiency", "1.0", "detection efficiency"),
                  num("n-min", "0.2", "smallest photon number"),
                  num("n-max", "12.0", "largest photon number"),
                  integer("points", "120", "sweep points")},
                 impl::qwp_concurrence_exp});
  reg.push_back({"fisher-sweep",
                 "Classical information of field readout across the phase",
                 "phase-independent homodyne information at and below the "
                 "quantum bound",
                 120.0,
                 {boolean("use-ecs", "true", "two-branch probe instead of qubit probe"),
                  boolean("use-counting", "false", "counting instead of homodyne"),
                  num("p", "0.05", "photon loss"), num("nbar", "10", "mean photons"),
                  integer("phi-points", "50", "phase grid")},
                 impl::fisher_sweep});
  reg.push_back({"mle-consistency",
                 "Maximum-likelihood phase estimation against the bound",
                 "estimator variance within tens of percent of the bound",
                 60.0,
                 {num("nbar", "4.0", "mean photons"), num("phi", "0.7", "true phase"),
                  integer("reps", "200", "repetitions"),
                  integer("samples", "10000", "shots per repetition")},
                 impl::mle_consistency});
  reg.push_back({"flyingcat-tradeoff",
                 "Inference error versus backaction for the pulse parity check",
                 "interior optimum of the total check error",
                 1.0,
                 {num("eta", "0.01", "per-link loss"),
                  num("alpha-max", "4.0", "largest amplitude"),
                  integer("points", "100", "sweep points")},
                 impl::flyingcat_tradeoff});
  reg.push_back({"ghz-fidelity",
                 "Three-qubit entangled-state preparation quality",
                 "composed preparation error of the two-check protocol",
                 1.0,
                 {num("eta", "0.01", "per-link loss"),
                  num("alpha-max", "4.0", "largest amplitude"),
                  integer("points", "100", "sweep points")},
                 impl::ghz_fidelity});
  reg.push_back({"feasibility",
                 "Infidelity budget of the conditioned-phase reflection",
                 "bandwidth ~0.046 and dephasing ~0.083 budget terms",
                 1.0,
                 {num("chi-mhz", "-1.05", "dispersive shift / 2pi"),
                  num("kappa-int-mhz", "0.22", "internal loss / 2pi"),
                  num("tau-ns", "500", "pulse duration"),
                  num("t2star-us", "6", "dephasing time"),
                  num("alpha", "1.0", "pulse amplitude"),
                  num("eta-trans", "0.0", "transit loss"),
                  num("eta-circ", "0.13", "circulator loss")},
                 impl::feasibility_exp});
  reg.push_back({"tetra-witness",
                 "Entanglement-witness estimate for the six-qubit state",
                 "first-order witness budget of the check errors",
                 1.0,
                 {num("p-measure", "0.02", "inference error"),
                  num("p1", "0.005", "pair backaction"),
                  num("p2", "0.005", "single backaction"),
                  integer("points", "50", "scale sweep")},
                 impl::tetra_witness});
  reg.push_back({"tetra-teleport",
                 "Controlled teleportation of a two-qubit state",
                 "unit cooperative fidelity; 2/5 average without cooperation",
                 60.0,
                 {integer("samples", "10000", "random inputs"),
                  boolean("cooperate", "false", "third party cooperates")},
                 impl::tetra_teleport});
  reg.push_back({"timebin-gate",
                 "Long-range conditional-phase gate through a photonic link",
                 "inverse-square bandwidth scaling of the loss-inclusive error",
                 300.0,
                 {list("kappa-tau-list", "10,20,40,60", "bandwidth products"),
                  num("kappa-mhz", "50", "cavity linewidth / 2pi"),
                  integer("n-max", "2", "cavity truncation"),
                  num("gamma", "0.0", "qubit relaxation rate")},
                 impl::timebin_gate});
  reg.push_back({"timebin-scaling",
                 "Optimal pulse duration against qubit relaxation",
                 "exponents 1/3 and -2/3 of the optimum-duration power laws",
                 10.0,
                 {boolean("synthetic", "true", "closed-form error model"),
                  list("t1-list", "1e-5,3e-5,1e-4", "relaxation times"),
                  num("model-a", "18.0", "bandwidth coefficient"),
                  num("model-b", "0.9", "relaxation coefficient"),
                  list("kappa-tau-grid", "8,12,18,27,40,60", "simulated grid"),
                  num("kappa-mhz", "50", "cavity linewidth / 2pi"),
                  integer("n-max", "2", "cavity truncation")},
                 impl::timebin_scaling});
  reg.push_back({"loss-backaction",
                 "Dephasing left by an absorbed time-bin photon",
                 "bandwidth-controlled erasure of the which-bin record",
                 1.0,
                 {num("tau", "1.0", "bin width"),
                  num("coupling", "0.05", "root summed coupling"),
                  num("bandwidth", "0.5", "bath spectral width"),
                  num("mean-detuning", "0.0", "bath centre detuning"),
                  num("sep-max", "6.0", "largest separation over width"),
                  integer("points", "80", "sweep points")},
                 impl::loss_backaction_exp});
  return reg;
}

}  // namespace qsim
