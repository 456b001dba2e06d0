#pragma once

// Experiment configs and pipelines behind the `tps` command line tool.
//
// A run is a single JSON document naming an experiment and its parameters.
// The document is validated completely (types, ranges, unknown keys) before
// any computation, and every output is produced in memory first; files are
// only written once the whole pipeline has succeeded.

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tps/dynamics.hpp"
#include "tps/io.hpp"
#include "tps/nongauss.hpp"
#include "tps/quadratures.hpp"
#include "tps/twomode.hpp"

namespace tps::cli {

using io::json;

inline constexpr const char* kVersion = "1.0.0";

struct ExperimentInfo {
  std::string tag;
  std::string summary;
  std::vector<std::string> required;
  std::vector<std::string> optional;
  std::vector<std::string> outputs;
};

inline const std::vector<std::string>& common_required() {
  static const std::vector<std::string> keys{"experiment", "output_dir"};
  return keys;
}

inline const std::vector<std::string>& common_optional() {
  static const std::vector<std::string> keys{"threads", "truncation", "growth", "integrator"};
  return keys;
}

inline const std::vector<ExperimentInfo>& experiments() {
  static const std::vector<ExperimentInfo> list{
      {"squeeze-vs-theta",
       "third-order squeezing S_kx, S_ky of the signal versus pump phase theta at fixed xi",
       {"alpha_p", "xi", "thetas"},
       {"kappa", "orders"},
       {"squeeze_theta.csv"}},
      {"squeeze-vs-xi",
       "squeezing S and M of orders k (default 3 and 6) versus xi for several pump phases",
       {"alpha_p", "xis"},
       {"kappa", "thetas", "orders"},
       {"squeeze_xi.csv"}},
      {"density-matrix",
       "reduced signal density matrix and photon-number populations at one xi",
       {"alpha_p", "xi"},
       {"kappa", "theta"},
       {"density.json", "populations.csv"}},
      {"wigner",
       "signal Wigner function on a grid with negativity and 120-degree symmetry residual",
       {"alpha_p", "xi"},
       {"kappa", "theta", "grid"},
       {"wigner.csv", "wigner.json"}},
      {"nongauss-sweep",
       "relative-entropy non-Gaussianity delta and Wigner negativity versus xi for several alpha_p",
       {"alpha_ps", "xis"},
       {"kappa", "theta", "grid"},
       {"nongauss.csv"}},
      {"bs-joint",
       "two sources (phases theta_0, theta_pi) mixed on a beam splitter: joint homodyne distribution and "
       "per-mode Wigner functions",
       {"alpha_p", "t"},
       {"kappa_0", "kappa_pi", "theta_0", "theta_pi", "transmittance", "phi_1", "phi_2", "homodyne", "grid"},
       {"joint.csv", "joint.json", "wigner_mode1.csv", "wigner_mode1.json", "wigner_mode2.csv",
        "wigner_mode2.json"}},
      {"ppt-scan",
       "PPT test on higher-order covariance matrices of the mixed two-mode state versus interaction time t",
       {"alpha_p", "times"},
       {"kappa_0", "kappa_pi", "theta_0", "theta_pi", "transmittance", "pairs", "tolerance"},
       {"ppt_scan.csv"}},
  };
  return list;
}

inline const ExperimentInfo& experiment_info(const std::string& tag) {
  for (const auto& e : experiments())
    if (e.tag == tag) return e;
  std::string known;
  for (const auto& e : experiments()) known += (known.empty() ? "" : ", ") + e.tag;
  throw ConfigError("unknown experiment '" + tag + "' (known: " + known + ")");
}

/// Text printed by `tps list`.
inline std::string list_text() {
  std::string out;
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
    return s.empty() ? std::string("-") : s;
  };
  for (const auto& e : experiments()) {
    out += e.tag + "\n";
    out += "  reproduces: " + e.summary + "\n";
    out += "  required:   " + join(common_required()) + ", " + join(e.required) + "\n";
    out += "  optional:   " + join(common_optional()) + ", " + join(e.optional) + "\n";
    out += "  writes:     " + join(e.outputs) + ", manifest.json\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Config parsing

struct RunConfig {
  std::string experiment;
  std::filesystem::path output_dir;
  int threads = 0;
  std::optional<Truncation> truncation;
  GrowthPolicy growth;
  Integrator integrator = Integrator::DenseExponential;

  double kappa = 1.0;
  double kappa0 = 0.1;
  double kappa_pi = 0.1;
  double theta = 0.0;
  double theta0 = 0.0;
  double theta_pi = kPi;
  double alpha_p = 0.0;
  std::vector<double> alpha_ps;
  double xi = 0.0;
  double t = 0.0;
  std::vector<double> thetas;
  std::vector<double> xis;
  std::vector<double> times;
  std::vector<int> orders;
  GridSpec grid;
  bool grid_auto = true;
  QuadratureAxis homodyne;
  bool homodyne_auto = true;
  double phi1 = 0.0;
  double phi2 = 0.0;
  double transmittance = 0.6;
  std::vector<std::pair<int, int>> pairs = standard_pairs();
  double tolerance = 1e-7;

  json echo;  // the document as given
};

namespace detail {

inline double number(const json& j, const std::string& key) {
  if (!j.is_number()) throw ConfigError("'" + key + "' must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError("'" + key + "' must be finite");
  return v;
}

inline int integer(const json& j, const std::string& key) {
  if (!j.is_number_integer()) throw ConfigError("'" + key + "' must be an integer");
  return j.get<int>();
}

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError("'" + where + "' must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

/// Either an explicit array, {"start", "stop", "count"[, "endpoint"]} or
/// {"start", "stop", "step"} (stop included when reached).
inline std::vector<double> grid(const json& j, const std::string& key) {
  std::vector<double> out;
  if (j.is_array()) {
    for (const auto& v : j) out.push_back(number(v, key + "[]"));
  } else if (j.is_object()) {
    const bool has_count = j.contains("count"), has_step = j.contains("step");
    if (has_count == has_step) throw ConfigError("'" + key + "' needs exactly one of 'count' or 'step'");
    check_keys(j, has_count ? std::set<std::string>{"start", "stop", "count", "endpoint"}
                            : std::set<std::string>{"start", "stop", "step"},
               key);
    if (!j.contains("start") || !j.contains("stop")) throw ConfigError("'" + key + "' needs 'start' and 'stop'");
    const double a = number(j["start"], key + ".start"), b = number(j["stop"], key + ".stop");
    if (has_count) {
      const int n = integer(j["count"], key + ".count");
      if (n < 1) throw ConfigError("'" + key + ".count' must be >= 1");
      bool endpoint = true;
      if (j.contains("endpoint")) {
        if (!j["endpoint"].is_boolean()) throw ConfigError("'" + key + ".endpoint' must be a boolean");
        endpoint = j["endpoint"].get<bool>();
      }
      const int div = endpoint ? n - 1 : n;
      for (int i = 0; i < n; ++i) out.push_back(div == 0 ? a : a + (b - a) * i / div);
    } else {
      const double h = number(j["step"], key + ".step");
      if (!(h > 0.0) || !(b >= a)) throw ConfigError("'" + key + "' needs step > 0 and stop >= start");
      const long n = static_cast<long>(std::floor((b - a) / h + 1e-9)) + 1;
      if (n > 1000000) throw ConfigError("'" + key + "' has too many points");
      for (long i = 0; i < n; ++i) out.push_back(a + i * h);
    }
  } else {
    throw ConfigError("'" + key + "' must be an array or a {start, stop, count|step} object");
  }
  if (out.empty()) throw ConfigError("'" + key + "' is empty");
  return out;
}

inline void increasing(const std::vector<double>& v, const std::string& key, double lower) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!(v[i] >= lower)) throw ConfigError("'" + key + "' values must be >= " + io::format_double(lower));
    if (i > 0 && !(v[i] > v[i - 1])) throw ConfigError("'" + key + "' must be strictly increasing");
  }
}

inline double positive(const json& j, const std::string& key) {
  const double v = number(j, key);
  if (!(v > 0.0)) throw ConfigError("'" + key + "' must be > 0");
  return v;
}

}  // namespace detail

/// Validates the whole document; throws ConfigError (exit code 2) on any problem.
inline RunConfig parse_config(const json& doc) {
  using namespace detail;
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  if (!doc.contains("experiment") || !doc["experiment"].is_string())
    throw ConfigError("'experiment' is required and must be a string");
  RunConfig c;
  c.echo = doc;
  c.experiment = doc["experiment"].get<std::string>();
  const ExperimentInfo& info = experiment_info(c.experiment);

  std::set<std::string> allowed(common_required().begin(), common_required().end());
  allowed.insert(common_optional().begin(), common_optional().end());
  allowed.insert(info.required.begin(), info.required.end());
  allowed.insert(info.optional.begin(), info.optional.end());
  check_keys(doc, allowed, "config for '" + c.experiment + "'");
  for (const auto& k : common_required())
    if (!doc.contains(k)) throw ConfigError("missing required key '" + k + "'");
  for (const auto& k : info.required)
    if (!doc.contains(k)) throw ConfigError("missing required key '" + k + "' for " + c.experiment);

  if (!doc["output_dir"].is_string() || doc["output_dir"].get<std::string>().empty())
    throw ConfigError("'output_dir' must be a non-empty string");
  c.output_dir = doc["output_dir"].get<std::string>();

  if (doc.contains("threads")) {
    c.threads = integer(doc["threads"], "threads");
    if (c.threads < 0) throw ConfigError("'threads' must be >= 0 (0 = all cores)");
  }
  if (doc.contains("truncation")) {
    const auto& t = doc["truncation"];
    check_keys(t, {"n_signal", "n_pump"}, "truncation");
    Truncation tr{24, 0};
    if (t.contains("n_signal")) tr.n_signal = integer(t["n_signal"], "truncation.n_signal");
    if (t.contains("n_pump")) tr.n_pump = integer(t["n_pump"], "truncation.n_pump");
    if (tr.n_signal < 3) throw ConfigError("'truncation.n_signal' must be >= 3");
    if (tr.n_pump < 0) throw ConfigError("'truncation.n_pump' must be >= 1 (or omitted for the default)");
    c.truncation = tr;
  }
  if (doc.contains("growth")) {
    const auto& g = doc["growth"];
    check_keys(g, {"threshold", "max_signal", "max_pump"}, "growth");
    if (g.contains("threshold")) c.growth.threshold = positive(g["threshold"], "growth.threshold");
    if (g.contains("max_signal")) c.growth.max_signal = integer(g["max_signal"], "growth.max_signal");
    if (g.contains("max_pump")) c.growth.max_pump = integer(g["max_pump"], "growth.max_pump");
    if (c.growth.max_signal < 3 || c.growth.max_pump < 1) throw ConfigError("growth caps are too small");
  }
  if (doc.contains("integrator")) {
    if (!doc["integrator"].is_string()) throw ConfigError("'integrator' must be a string");
    c.integrator = integrator_from_string(doc["integrator"].get<std::string>());
  }

  if (doc.contains("kappa")) c.kappa = positive(doc["kappa"], "kappa");
  if (doc.contains("kappa_0")) c.kappa0 = positive(doc["kappa_0"], "kappa_0");
  if (doc.contains("kappa_pi")) c.kappa_pi = positive(doc["kappa_pi"], "kappa_pi");
  if (doc.contains("theta")) c.theta = number(doc["theta"], "theta");
  if (doc.contains("theta_0")) c.theta0 = number(doc["theta_0"], "theta_0");
  if (doc.contains("theta_pi")) c.theta_pi = number(doc["theta_pi"], "theta_pi");
  if (doc.contains("alpha_p")) c.alpha_p = positive(doc["alpha_p"], "alpha_p");
  if (doc.contains("alpha_ps")) {
    c.alpha_ps = grid(doc["alpha_ps"], "alpha_ps");
    for (double a : c.alpha_ps)
      if (!(a > 0.0)) throw ConfigError("'alpha_ps' values must be > 0");
  }
  if (doc.contains("xi")) {
    c.xi = number(doc["xi"], "xi");
    if (c.xi < 0.0) throw ConfigError("'xi' must be >= 0");
  }
  if (doc.contains("t")) {
    c.t = number(doc["t"], "t");
    if (c.t < 0.0) throw ConfigError("'t' must be >= 0");
  }
  if (doc.contains("thetas")) c.thetas = grid(doc["thetas"], "thetas");
  else c.thetas = {0.0, kPi / 2, kPi, 3 * kPi / 2};
  if (doc.contains("xis")) {
    c.xis = grid(doc["xis"], "xis");
    increasing(c.xis, "xis", 0.0);
  }
  if (doc.contains("times")) {
    c.times = grid(doc["times"], "times");
    increasing(c.times, "times", 0.0);
  }
  if (doc.contains("orders")) {
    if (!doc["orders"].is_array() || doc["orders"].empty()) throw ConfigError("'orders' must be a non-empty array");
    for (const auto& o : doc["orders"]) {
      const int k = integer(o, "orders[]");
      if (k < 1 || k > 12) throw ConfigError("'orders' values must be in [1, 12]");
      c.orders.push_back(k);
    }
  } else {
    c.orders = c.experiment == "squeeze-vs-xi" ? std::vector<int>{3, 6} : std::vector<int>{3};
  }
  if (doc.contains("grid")) {
    const auto& g = doc["grid"];
    check_keys(g, {"x_min", "x_max", "p_min", "p_max", "n_x", "n_p", "auto"}, "grid");
    if (g.contains("x_min")) c.grid.x_min = number(g["x_min"], "grid.x_min");
    if (g.contains("x_max")) c.grid.x_max = number(g["x_max"], "grid.x_max");
    if (g.contains("p_min")) c.grid.p_min = number(g["p_min"], "grid.p_min");
    if (g.contains("p_max")) c.grid.p_max = number(g["p_max"], "grid.p_max");
    if (g.contains("n_x")) c.grid.n_x = integer(g["n_x"], "grid.n_x");
    if (g.contains("n_p")) c.grid.n_p = integer(g["n_p"], "grid.n_p");
    if (g.contains("auto")) {
      if (!g["auto"].is_boolean()) throw ConfigError("'grid.auto' must be a boolean");
      c.grid_auto = g["auto"].get<bool>();
    }
    c.grid.validate();
    if (c.grid.n_x > 2001 || c.grid.n_p > 2001) throw ConfigError("grid has more than 2001 points per axis");
  }
  if (doc.contains("homodyne")) {
    const auto& h = doc["homodyne"];
    check_keys(h, {"min", "max", "n", "auto"}, "homodyne");
    if (h.contains("auto")) {
      if (!h["auto"].is_boolean()) throw ConfigError("'homodyne.auto' must be a boolean");
      c.homodyne_auto = h["auto"].get<bool>();
    }
    if (h.contains("min")) c.homodyne.min = number(h["min"], "homodyne.min");
    if (h.contains("max")) c.homodyne.max = number(h["max"], "homodyne.max");
    if (h.contains("n")) c.homodyne.n = integer(h["n"], "homodyne.n");
    if (!(c.homodyne.max > c.homodyne.min) || c.homodyne.n < 3 || c.homodyne.n > 2001)
      throw ConfigError("'homodyne' needs max > min and 3 <= n <= 2001");
  }
  if (doc.contains("phi_1")) c.phi1 = number(doc["phi_1"], "phi_1");
  if (doc.contains("phi_2")) c.phi2 = number(doc["phi_2"], "phi_2");
  if (doc.contains("transmittance")) c.transmittance = number(doc["transmittance"], "transmittance");
  BeamSplitterSpec{c.transmittance}.validate();
  if (doc.contains("pairs")) {
    const auto& p = doc["pairs"];
    if (!p.is_array() || p.empty()) throw ConfigError("'pairs' must be a non-empty array of [k, l]");
    c.pairs.clear();
    for (const auto& kl : p) {
      if (!kl.is_array() || kl.size() != 2) throw ConfigError("'pairs' entries must be [k, l]");
      const int k = integer(kl[0], "pairs[][0]"), l = integer(kl[1], "pairs[][1]");
      if (k < 1 || l < 1 || k > 8 || l > 8) throw ConfigError("'pairs' orders must be in [1, 8]");
      c.pairs.emplace_back(k, l);
    }
  }
  if (doc.contains("tolerance")) c.tolerance = positive(doc["tolerance"], "tolerance");
  return c;
}

inline RunConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

// ---------------------------------------------------------------------------
// Running

struct RunOutput {
  std::vector<std::pair<std::string, std::string>> files;  // name, content, in emission order
  std::vector<std::string> warnings;
  json truncations = json::array();
  json timing = json::object();
  unsigned threads = 1;

  void add(const std::string& name, const std::string& content) { files.emplace_back(name, content); }
  void add(const std::string& name, const json& j) { files.emplace_back(name, j.dump(2) + "\n"); }

  template <class Fn>
  decltype(auto) stage(const std::string& name, Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    auto done = [&] {
      timing[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    if constexpr (std::is_void_v<std::invoke_result_t<Fn>>) {
      fn();
      done();
    } else {
      decltype(auto) r = fn();
      done();
      return r;
    }
  }
};

namespace detail {

inline json truncation_json(const std::string& source, const GrownTrajectory& g) {
  json j;
  j["source"] = source;
  j["n_signal"] = g.trajectory.trunc.n_signal;
  j["n_pump"] = g.trajectory.trunc.n_pump;
  json attempts = json::array();
  for (const auto& a : g.attempts) attempts.push_back(json::array({a.n_signal, a.n_pump}));
  j["attempts"] = attempts;
  j["max_norm_deviation"] = g.trajectory.max_norm_deviation();
  j["max_charge_drift"] = g.trajectory.max_charge_drift();
  return j;
}

inline Truncation start_truncation(const RunConfig& c, double alpha_p) {
  Truncation tr = c.truncation.value_or(Truncation{24, 0});
  if (tr.n_pump == 0) tr.n_pump = default_pump_cutoff(alpha_p);
  return tr;
}

/// Evolution of one source with truncation growth, recorded in the output.
inline GrownTrajectory grow(const RunConfig& c, RunOutput& out, const std::string& label, const ModelParams& mp,
                            const Truncation& start, int guard_levels = 0, bool record = true) {
  mp.validate();
  GrowthPolicy policy = c.growth;
  policy.guard_levels = guard_levels;
  auto g = evolve_with_growth(mp, start, policy, c.integrator);
  if (record) out.truncations.push_back(truncation_json(label, g));
  const double drift = std::max(g.trajectory.max_norm_deviation(), g.trajectory.max_charge_drift());
  if (drift > 1e-8)
    out.warnings.push_back(label + ": norm/charge drift " + io::format_double(drift) + " exceeds 1e-8");
  return g;
}

inline void squeezing_guard(const DensityOp& rho, int k, const std::string& where, std::vector<std::string>& warns) {
  const auto s = LabeledState::single(rho);
  if (!quadrature_stats(s, k, Axis::X).guard_ok || !quadrature_stats(s, k, Axis::Y).guard_ok)
    warns.push_back(where + ": order-" + std::to_string(k) + " moments touch the top Fock levels (guard)");
}

inline WignerGrid wigner_for(const RunConfig& c, const DensityOp& rho, unsigned threads) {
  return c.grid_auto ? wigner_auto(rho, c.grid, 1e-6, threads) : wigner(rho, c.grid, 1e-6, threads);
}

constexpr double kNegativityBudget = 1e-4;

inline NegativityResult budgeted_negativity(const RunConfig& c, const DensityOp& rho, unsigned threads) {
  return wigner_negativity(c.grid_auto ? wigner_for_negativity(rho, c.grid, kNegativityBudget, threads)
                                       : wigner(rho, c.grid, 1e-6, threads));
}

/// Square joint grid with the spacing of `base`, enlarged by 1.25 until the
/// boundary is empty (unless auto is off).
template <class Fn>
JointDistribution joint_auto(Fn&& fn, const QuadratureAxis& base, bool enlarge, int max_expansions = 12) {
  if (!enlarge) return fn(base);
  const double h = base.step();
  double half = std::max(-base.min, base.max);
  for (int attempt = 0;; ++attempt) {
    const int hn = static_cast<int>(std::ceil(half / h - 1e-9));
    try {
      return fn(QuadratureAxis{-hn * h, hn * h, 2 * hn + 1});
    } catch (const GridTooSmall&) {
      if (attempt >= max_expansions) throw;
      half *= 1.25;
    }
  }
}

inline std::string theta_label(double theta) { return "theta=" + io::format_double(theta); }

}  // namespace detail

inline int max_order(const RunConfig& c) { return *std::max_element(c.orders.begin(), c.orders.end()); }

inline void run_squeeze_vs_theta(const RunConfig& c, RunOutput& out) {
  const Truncation start = detail::start_truncation(c, c.alpha_p);
  const int guard = 2 * max_order(c);
  // the growth outcome is theta independent (populations do not depend on the
  // pump phase), so it is settled once and reused as the starting point
  const auto base = out.stage("truncation", [&] {
    return detail::grow(c, out, "theta sweep", ModelParams::from_xi(c.kappa, c.thetas.front(), c.alpha_p, {c.xi}),
                        start, guard);
  });
  std::vector<std::vector<double>> values(c.thetas.size());
  std::vector<std::vector<std::string>> warns(c.thetas.size());
  std::vector<Truncation> used(c.thetas.size());
  out.stage("evolve+squeezing", [&] {
    parallel_for(c.thetas.size(), out.threads, [&](std::size_t i) {
      const auto mp = ModelParams::from_xi(c.kappa, c.thetas[i], c.alpha_p, {c.xi});
      GrowthPolicy policy = c.growth;
      policy.guard_levels = guard;
      const auto g = evolve_with_growth(mp, base.trajectory.trunc, policy, c.integrator);
      used[i] = g.trajectory.trunc;
      const DensityOp rho = signal_density(g.trajectory, 0);
      for (int k : c.orders) {
        values[i].push_back(squeezing_S(rho, k, Axis::X));
        values[i].push_back(squeezing_S(rho, k, Axis::Y));
        detail::squeezing_guard(rho, k, detail::theta_label(c.thetas[i]), warns[i]);
      }
    });
  });
  std::vector<std::string> header{"theta"};
  for (int k : c.orders) {
    header.push_back("S" + std::to_string(k) + "x");
    header.push_back("S" + std::to_string(k) + "y");
  }
  io::CsvTable table(header);
  for (std::size_t i = 0; i < c.thetas.size(); ++i) {
    std::vector<std::string> row{io::cell(c.thetas[i])};
    for (double v : values[i]) row.push_back(io::cell(v));
    table.add_row(row);
    for (auto& w : warns[i]) out.warnings.push_back(std::move(w));
    if (!(used[i] == base.trajectory.trunc))
      out.warnings.push_back(detail::theta_label(c.thetas[i]) + ": needed a larger truncation (" +
                             std::to_string(used[i].n_signal) + ", " + std::to_string(used[i].n_pump) + ")");
  }
  out.add("squeeze_theta.csv", table.str());
}

inline void run_squeeze_vs_xi(const RunConfig& c, RunOutput& out) {
  const Truncation start = detail::start_truncation(c, c.alpha_p);
  std::vector<std::string> header{"theta", "xi"};
  for (int k : c.orders)
    for (const char* form : {"S", "M"}) {
      header.push_back(form + std::to_string(k) + "x");
      header.push_back(form + std::to_string(k) + "y");
    }
  io::CsvTable table(header);
  for (double theta : c.thetas) {
    const auto g = out.stage("evolve " + detail::theta_label(theta), [&] {
      return detail::grow(c, out, detail::theta_label(theta), ModelParams::from_xi(c.kappa, theta, c.alpha_p, c.xis),
                          start, 2 * max_order(c));
    });
    std::vector<std::vector<double>> rows(c.xis.size());
    std::vector<std::vector<std::string>> warns(c.xis.size());
    out.stage("squeezing " + detail::theta_label(theta), [&] {
      parallel_for(c.xis.size(), out.threads, [&](std::size_t i) {
        const DensityOp rho = signal_density(g.trajectory, i);
        for (int k : c.orders) {
          rows[i].push_back(squeezing_S(rho, k, Axis::X));
          rows[i].push_back(squeezing_S(rho, k, Axis::Y));
          rows[i].push_back(squeezing_M(rho, k, Axis::X));
          rows[i].push_back(squeezing_M(rho, k, Axis::Y));
          detail::squeezing_guard(rho, k, detail::theta_label(theta) + " xi=" + io::format_double(c.xis[i]), warns[i]);
        }
      });
    });
    for (std::size_t i = 0; i < c.xis.size(); ++i) {
      std::vector<std::string> row{io::cell(theta), io::cell(c.xis[i])};
      for (double v : rows[i]) row.push_back(io::cell(v));
      table.add_row(row);
      for (auto& w : warns[i]) out.warnings.push_back(std::move(w));
    }
  }
  out.add("squeeze_xi.csv", table.str());
}

inline DensityOp single_signal(const RunConfig& c, RunOutput& out) {
  return out.stage("evolve", [&] {
    const auto g = detail::grow(c, out, detail::theta_label(c.theta),
                                ModelParams::from_xi(c.kappa, c.theta, c.alpha_p, {c.xi}),
                                detail::start_truncation(c, c.alpha_p));
    return signal_density(g.trajectory, 0);
  });
}

inline void run_density_matrix(const RunConfig& c, RunOutput& out) {
  const DensityOp rho = single_signal(c, out);
  json j;
  j["theta"] = c.theta;
  j["xi"] = c.xi;
  j["alpha_p"] = c.alpha_p;
  j["kappa"] = c.kappa;
  j["density"] = io::density_to_json(rho);
  out.add("density.json", j);
  out.add("populations.csv", io::populations_table(rho).str());
}

inline void run_wigner(const RunConfig& c, RunOutput& out) {
  const DensityOp rho = single_signal(c, out);
  const WignerGrid g = out.stage("wigner", [&] { return detail::wigner_for(c, rho, out.threads); });
  json side = io::wigner_sidecar(g);
  out.stage("diagnostics", [&] {
    const auto neg = wigner_negativity(g);
    side["negativity"] = neg.value;
    side["negativity_error"] = neg.error_estimate;
    side["symmetry_residual_120"] = symmetry_residual(rho, g, 2.0 * kPi / 3.0, out.threads);
    if (neg.error_estimate > detail::kNegativityBudget)
      out.warnings.push_back("negativity error estimate " + io::format_double(neg.error_estimate) + " exceeds 1e-4");
  });
  out.add("wigner.csv", io::wigner_table(g).str());
  out.add("wigner.json", side);
}

inline void run_nongauss_sweep(const RunConfig& c, RunOutput& out) {
  std::vector<io::NongaussRow> rows;
  for (double alpha : c.alpha_ps) {
    const std::string label = "alpha_p=" + io::format_double(alpha);
    const auto g = out.stage("evolve " + label, [&] {
      return detail::grow(c, out, label, ModelParams::from_xi(c.kappa, c.theta, alpha, c.xis),
                          detail::start_truncation(c, alpha), 2);
    });
    std::vector<io::NongaussRow> block(c.xis.size());
    std::vector<std::string> warns(c.xis.size());
    out.stage("measures " + label, [&] {
      parallel_for(c.xis.size(), out.threads, [&](std::size_t i) {
        const DensityOp rho = signal_density(g.trajectory, i);
        const auto neg = detail::budgeted_negativity(c, rho, 1);
        block[i] = {c.xis[i], alpha, c.theta, relative_entropy_nongaussianity(rho), neg.value};
        if (neg.error_estimate > detail::kNegativityBudget)
          warns[i] = label + " xi=" + io::format_double(c.xis[i]) + ": negativity error estimate " +
                     io::format_double(neg.error_estimate);
      });
    });
    for (std::size_t i = 0; i < block.size(); ++i) {
      rows.push_back(block[i]);
      if (!warns[i].empty()) out.warnings.push_back(warns[i]);
    }
  }
  out.add("nongauss.csv", io::nongauss_table(rows).str());
}

inline void run_bs_joint(const RunConfig& c, RunOutput& out) {
  const Truncation start = detail::start_truncation(c, c.alpha_p);
  const auto g0 = out.stage("evolve source 0", [&] {
    return detail::grow(c, out, "source 0", ModelParams{c.kappa0, c.theta0, c.alpha_p, {c.t}}, start);
  });
  const auto gp = out.stage("evolve source pi", [&] {
    return detail::grow(c, out, "source pi", ModelParams{c.kappa_pi, c.theta_pi, c.alpha_p, {c.t}}, start);
  });
  const DensityOp r0 = signal_density(g0.trajectory, 0), r_pi = signal_density(gp.trajectory, 0);
  const BeamSplitterSpec splitter{c.transmittance};
  const TwoModeState s = out.stage("beam splitter", [&] { return beam_split(r0, r_pi, splitter); });
  if (s.discarded_weight > 1e-10)
    out.warnings.push_back("beam splitter discarded weight " + io::format_double(s.discarded_weight));
  // a common phase on both outputs factorizes exactly over the inputs
  const bool common_phase = c.phi1 == c.phi2;
  const auto joint = out.stage("joint homodyne", [&] {
    return detail::joint_auto(
        [&](const QuadratureAxis& ax) {
          return common_phase ? mixed_joint_homodyne(r0, r_pi, splitter, c.phi1, ax, ax, 1e-6, out.threads)
                              : homodyne_joint(s.state, c.phi1, c.phi2, ax, ax, 1e-6, out.threads);
        },
        c.homodyne, c.homodyne_auto);
  });
  json js = io::joint_sidecar(joint, c.phi1, c.phi2);
  js["transmittance"] = c.transmittance;
  js["method"] = common_phase ? "input factorization" : "mixed state";
  js["n_total_max"] = s.n_total_max;
  js["discarded_weight"] = s.discarded_weight;
  out.add("joint.csv", io::joint_table(joint).str());
  out.add("joint.json", js);
  for (int mode = 0; mode < 2; ++mode) {
    const std::string name = "wigner_mode" + std::to_string(mode + 1);
    const DensityOp rho = reduced_density(s.state, mode);
    const WignerGrid g = out.stage(name, [&] { return detail::wigner_for(c, rho, out.threads); });
    json side = io::wigner_sidecar(g);
    side["mode"] = mode + 1;
    side["negativity"] = wigner_negativity(g).value;
    side["symmetry_residual_120"] = symmetry_residual(rho, g, 2.0 * kPi / 3.0, out.threads);
    out.add(name + ".csv", io::wigner_table(g).str());
    out.add(name + ".json", side);
  }
}

inline void run_ppt_scan(const RunConfig& c, RunOutput& out) {
  ScanConfig sc;
  sc.theta0 = c.theta0;
  sc.theta_pi = c.theta_pi;
  sc.kappa0 = c.kappa0;
  sc.kappa_pi = c.kappa_pi;
  sc.alpha_p = c.alpha_p;
  sc.times = c.times;
  sc.pairs = c.pairs;
  sc.splitter = {c.transmittance};
  sc.tolerance = c.tolerance;
  sc.trunc = c.truncation.value_or(Truncation{24, 0});
  sc.growth = c.growth;
  sc.threads = out.threads;
  const auto scan = out.stage("scan", [&] { return entanglement_scan(sc); });
  auto record = [&](const char* label, const Truncation& tr, const EntanglementScan::Drift& d) {
    json j;
    j["source"] = label;
    j["n_signal"] = tr.n_signal;
    j["n_pump"] = tr.n_pump;
    j["max_norm_deviation"] = d.norm;
    j["max_charge_drift"] = d.charge;
    out.truncations.push_back(j);
  };
  record("source 0", scan.trunc0, scan.drift0);
  record("source pi", scan.trunc_pi, scan.drift_pi);
  for (const auto& p : scan.points) {
    if (p.discarded_weight > 1e-10)
      out.warnings.push_back("t=" + io::format_double(p.t) + ": beam splitter discarded weight " +
                             io::format_double(p.discarded_weight));
    for (const auto& r : p.results)
      if (!r.guard_ok)
        out.warnings.push_back("t=" + io::format_double(p.t) + " (k,l)=(" + std::to_string(r.k) + "," +
                               std::to_string(r.l) + "): moments touch the top Fock levels (guard)");
  }
  out.add("ppt_scan.csv", io::ppt_table(scan).str());
}

/// Runs the pipeline in memory. Library errors propagate with their category.
inline RunOutput execute(const RunConfig& c) {
  RunOutput out;
  out.threads = resolve_threads(c.threads);
  if (c.experiment == "squeeze-vs-theta") run_squeeze_vs_theta(c, out);
  else if (c.experiment == "squeeze-vs-xi") run_squeeze_vs_xi(c, out);
  else if (c.experiment == "density-matrix") run_density_matrix(c, out);
  else if (c.experiment == "wigner") run_wigner(c, out);
  else if (c.experiment == "nongauss-sweep") run_nongauss_sweep(c, out);
  else if (c.experiment == "bs-joint") run_bs_joint(c, out);
  else if (c.experiment == "ppt-scan") run_ppt_scan(c, out);
  else throw ConfigError("unknown experiment '" + c.experiment + "'");
  return out;
}

inline json manifest(const RunConfig& c, const RunOutput& out) {
  json m;
  m["version"] = kVersion;
  m["experiment"] = c.experiment;
  m["config"] = c.echo;
  m["output_dir"] = c.output_dir.string();
  m["threads"] = out.threads;
  m["truncations"] = out.truncations;
  m["guard_warnings"] = out.warnings;
  json files = json::array();
  for (const auto& [name, content] : out.files) files.push_back(name);
  m["files"] = files;
  m["wall_clock_seconds"] = out.timing;
  return m;
}

/// Writes every output and the manifest into the output directory.
inline void write_outputs(const RunConfig& c, const RunOutput& out) {
  std::error_code ec;
  std::filesystem::create_directories(c.output_dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + c.output_dir.string() + "': " + ec.message());
  for (const auto& [name, content] : out.files) io::write_text(c.output_dir / name, content);
  io::write_text(c.output_dir / "manifest.json", manifest(c, out).dump(2) + "\n");
}

inline int exit_code(const Error& e) {
  switch (e.category()) {
    case Error::Category::Validation:
      return 2;
    case Error::Category::Truncation:
      return 3;
    case Error::Category::Numerical:
      return 4;
  }
  return 4;
}

}  // namespace tps::cli
