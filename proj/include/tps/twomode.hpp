#pragma once

// Two-mode states from mixing a 0-phase and a pi-phase triple-photon state on
// a beam splitter, their cross-mode correlations and PPT entanglement scans.
//
// Mode convention: a_1 = sqrt(T) a_0 + sqrt(1-T) a_pi,
//                  a_2 = sqrt(1-T) a_0 - sqrt(T) a_pi.
// The output lives on a compressed basis of complete total-photon-number
// blocks, ordered by total N and then by n_1. Low-order output moments of a
// product input can also be taken without forming the output state at all
// (MixedMoments), which is what the entanglement scan uses.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tps/dynamics.hpp"
#include "tps/nongauss.hpp"
#include "tps/parallel.hpp"
#include "tps/quadratures.hpp"

namespace tps {

struct BeamSplitterSpec {
  double transmittance = 0.6;
  std::string convention = "real-orthogonal";  // [[sqrt T, sqrt R], [sqrt R, -sqrt T]]

  void validate() const {
    if (!(transmittance > 0.0 && transmittance <= 1.0))
      throw ConfigError("transmittance must lie in (0, 1], got " + std::to_string(transmittance));
    if (convention != "real-orthogonal") throw ConfigError("unknown beam-splitter convention '" + convention + "'");
  }

  /// Output annihilators in terms of inputs: a_out = M a_in.
  Eigen::Matrix2d mixing_matrix() const {
    const double t = std::sqrt(transmittance), r = std::sqrt(1.0 - transmittance);
    Eigen::Matrix2d m;
    m << t, r, r, -t;
    return m;
  }
};

struct Provenance {
  double theta0 = 0.0;
  double kappa0 = 0.0;
  double theta_pi = kPi;
  double kappa_pi = 0.0;
  double alpha_p = 0.0;
  double t = 0.0;
};

struct TwoModeState {
  LabeledState state;
  int n_total_max = 0;
  double discarded_weight = 0.0;  // input weight above n_total_max, removed before renormalizing
  Provenance provenance;

  const DensityOp& rho() const { return state.rho(); }
};

/// Signal-mode state after evolving |0> (x) |alpha_p> for time t.
inline DensityOp prepare_tps(double theta, double kappa, double alpha_p, double t, const Truncation& trunc) {
  const ModelParams mp{kappa, theta, alpha_p, {t}};
  return signal_density(evolve(initial_state(alpha_p, trunc), mp, trunc), 0);
}

namespace detail {

/// Block unitary on {|m, N-m>} (m photons in the first input) implementing the
/// mode map above: exp(theta J) followed by the (-1)^{n_2} phase, with
/// J = a_0^dag a_pi - a_pi^dag a_0 and cos(theta) = sqrt(T).
inline RMatrix beam_splitter_block(int total, double transmittance) {
  const int n = total + 1;
  CMatrix h = CMatrix::Zero(n, n);  // i J, Hermitian
  for (int m = 0; m < total; ++m) {
    const double v = std::sqrt((m + 1.0) * (total - m));
    h(m + 1, m) = I * v;
    h(m, m + 1) = -I * v;
  }
  const double theta = std::acos(std::sqrt(transmittance));
  Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
  CVector phases(n);
  for (int j = 0; j < n; ++j) phases(j) = std::polar(1.0, -theta * es.eigenvalues()(j));
  RMatrix u = (es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint()).real();
  for (int m = 0; m < n; ++m)
    if ((total - m) % 2 == 1) u.row(m) *= -1.0;
  return u;
}

}  // namespace detail

struct BeamSplitOptions {
  int n_total_max = -1;           // -1: smallest N whose tail weight is <= tail_tolerance
  double tail_tolerance = 1e-10;
  double guard_tolerance = 1e-6;  // discarded weight above this raises GuardViolation
  bool apply = true;              // false: keep the product rho_0 (x) rho_pi (separable control)
};

/// Total-photon-number distribution of rho_0 (x) rho_pi.
inline RVector total_number_distribution(const DensityOp& rho0, const DensityOp& rho_pi) {
  const RVector p0 = rho0.populations(), p1 = rho_pi.populations();
  RVector out = RVector::Zero(p0.size() + p1.size() - 1);
  for (Eigen::Index i = 0; i < p0.size(); ++i)
    for (Eigen::Index j = 0; j < p1.size(); ++j) out(i + j) += p0(i) * p1(j);
  return out;
}

/// Mixes rho_0 (first input) and rho_pi (second input).
inline TwoModeState beam_split(const DensityOp& rho0, const DensityOp& rho_pi, const BeamSplitterSpec& spec = {},
                               const BeamSplitOptions& opt = {}) {
  spec.validate();
  const int d0 = rho0.dim(), d1 = rho_pi.dim();
  const RVector pn = total_number_distribution(rho0, rho_pi);
  int nmax = opt.n_total_max;
  if (nmax < 0) {
    nmax = static_cast<int>(pn.size()) - 1;
    double tail = 0.0;
    while (nmax > 0 && tail + pn(nmax) <= opt.tail_tolerance) tail += pn(nmax--);
  }
  nmax = std::min(nmax, static_cast<int>(pn.size()) - 1);
  const double discarded = std::max(0.0, pn.tail(pn.size() - nmax - 1).sum());
  if (discarded > opt.guard_tolerance)
    throw GuardViolation("beam splitter total-photon cutoff " + std::to_string(nmax) + " discards weight " +
                         std::to_string(discarded));

  // blocks of total N that carry weight
  std::vector<int> totals;
  for (int n = 0; n <= nmax; ++n)
    if (pn(n) > 0.0) totals.push_back(n);
  std::vector<int> offset;
  std::vector<Label> labels;
  for (int n : totals) {
    offset.push_back(static_cast<int>(labels.size()));
    for (int m = 0; m <= n; ++m) labels.push_back({m, n - m});
  }
  const int size = static_cast<int>(labels.size());

  // input product restricted to the kept blocks, in (m, N-m) input labels
  CMatrix in = CMatrix::Zero(size, size);
  for (int a = 0; a < size; ++a) {
    const auto [i0, i1] = labels[a];
    if (i0 >= d0 || i1 >= d1) continue;
    for (int b = 0; b < size; ++b) {
      const auto [j0, j1] = labels[b];
      if (j0 >= d0 || j1 >= d1) continue;
      in(a, b) = rho0(i0, j0) * rho_pi(i1, j1);
    }
  }

  CMatrix out;
  if (opt.apply) {
    std::vector<RMatrix> blocks;
    for (int n : totals) blocks.push_back(detail::beam_splitter_block(n, spec.transmittance));
    out = CMatrix::Zero(size, size);
    for (std::size_t p = 0; p < totals.size(); ++p)
      for (std::size_t q = 0; q < totals.size(); ++q) {
        const int np = totals[p] + 1, nq = totals[q] + 1;
        out.block(offset[p], offset[q], np, nq) =
            blocks[p].cast<cplx>() * in.block(offset[p], offset[q], np, nq) * blocks[q].transpose().cast<cplx>();
      }
  } else {
    out = std::move(in);
  }
  const double tr = out.trace().real();
  if (!(tr > 0.0)) throw InvalidState("beam splitter output has no weight");
  out /= tr;

  TwoModeState s;
  s.state = LabeledState(std::move(labels), DensityOp(std::move(out)), 2);
  s.n_total_max = nmax;
  s.discarded_weight = discarded;
  return s;
}

/// Reduced density of one output mode.
inline DensityOp reduced_density(const LabeledState& s, int mode) {
  if (s.modes() != 2 || mode < 0 || mode > 1) throw IndexOutOfRange("reduced_density needs mode 0 or 1 of a two-mode state");
  const int other = 1 - mode;
  const int d = s.cutoff(mode) + 1;
  const auto& labels = s.labels();
  const CMatrix& rho = s.rho().matrix();
  CMatrix out = CMatrix::Zero(d, d);
  for (int a = 0; a < s.size(); ++a)
    for (int b = 0; b < s.size(); ++b)
      if (labels[a][other] == labels[b][other]) out(labels[a][mode], labels[b][mode]) += rho(a, b);
  return DensityOp(out);
}

/// <o_1^(n) o_2^(k)> with o the x or y quadrature of the given order.
inline MomentValue cross_moment(const TwoModeState& s, int n, int k, char axis1 = 'x', char axis2 = 'x') {
  if (n < 1 || k < 1) throw InvalidOrder("cross-moment orders must be >= 1");
  return moment(s.state, concat(quadrature_factor(axis1, n, 0), quadrature_factor(axis2, k, 1)));
}

inline bool selection_rule_allows(int n, int k) { return (n + k) % 3 == 0 || (n - k) % 3 == 0 || n == k; }

struct AuditRow {
  int n = 0;
  int k = 0;
  double magnitude = 0.0;
  bool allowed = false;
  bool pass = true;  // forbidden pairs must vanish
  bool guard_ok = true;
};

inline std::vector<AuditRow> selection_rule_audit(const TwoModeState& s, int max_order, double tolerance = 1e-9) {
  std::vector<AuditRow> rows;
  for (int n = 1; n <= max_order; ++n)
    for (int k = 1; k <= max_order; ++k) {
      const auto v = cross_moment(s, n, k);
      AuditRow r{n, k, std::abs(v.value), selection_rule_allows(n, k), true, v.guard_ok};
      r.pass = r.allowed || r.magnitude <= tolerance;
      rows.push_back(r);
    }
  return rows;
}

/// Output-mode moments of a beam splitter fed with rho_0 (x) rho_pi, in the
/// Heisenberg picture. Every output ladder power expands binomially,
///   (c0 a_0 + cpi a_pi)^n = sum_j C(n,j) c0^j cpi^(n-j) a_0^j a_pi^(n-j),
/// and the input modes commute, so an output moment is a finite sum of
/// products of single-mode input moments. Nothing is truncated beyond the
/// inputs themselves; the guard flag refers to the input states.
/// Not thread safe (input moments are memoized).
class MixedMoments {
public:
  MixedMoments(const DensityOp& rho0, const DensityOp& rho_pi, const BeamSplitterSpec& spec = {})
      : in_{LabeledState::single(rho0), LabeledState::single(rho_pi)} {
    spec.validate();
    const double st = std::sqrt(spec.transmittance), sr = std::sqrt(1.0 - spec.transmittance);
    coef_[0] = {st, sr};
    coef_[1] = {sr, -st};
  }

  /// tr(O rho_out) for O written on the output modes (0 = mode 1, 1 = mode 2).
  MomentValue operator()(const MomentSpec& spec) const {
    std::vector<Word> words{{{}, 1.0}};
    for (const auto& f : spec) {
      if (f.mode < 0 || f.mode > 1) throw MomentSpecError("mixed moments are defined on two output modes");
      for (int rep = 0; rep < f.power; ++rep) words = append(words, f);
    }
    MomentValue total{0.0, true};
    for (const auto& w : words) {
      if (w.coef == 0.0) continue;
      const auto v = expand(w.ladders);
      total.value += w.coef * v.value;
      total.guard_ok = total.guard_ok && v.guard_ok;
    }
    return total;
  }

  MomentValue operator()(const std::string& spec) const { return (*this)(parse_moment(spec)); }

private:
  struct Ladder {
    int mode;
    bool dagger;
    int power;
  };
  struct Word {
    std::vector<Ladder> ladders;
    cplx coef;
  };

  static std::vector<Word> append(const std::vector<Word>& words, const MomentFactor& f) {
    // each factor as a combination of ladder strings on its output mode
    std::vector<std::pair<std::vector<Ladder>, cplx>> parts;
    const int m = f.mode, k = f.order;
    switch (f.kind) {
      case FactorKind::A: parts = {{{{m, false, k}}, 1.0}}; break;
      case FactorKind::Ad: parts = {{{{m, true, k}}, 1.0}}; break;
      case FactorKind::X: parts = {{{{m, false, k}}, 0.5}, {{{m, true, k}}, 0.5}}; break;
      case FactorKind::Y: parts = {{{{m, false, k}}, -0.5 * I}, {{{m, true, k}}, 0.5 * I}}; break;
      case FactorKind::F: parts = {{{{m, false, k}, {m, true, k}}, 0.5}, {{{m, true, k}, {m, false, k}}, -0.5}}; break;
      case FactorKind::N: parts = {{{{m, true, 1}, {m, false, 1}}, 1.0}}; break;
    }
    std::vector<Word> out;
    for (const auto& w : words)
      for (const auto& [ladders, c] : parts) {
        Word n = w;
        n.ladders.insert(n.ladders.end(), ladders.begin(), ladders.end());
        n.coef *= c;
        out.push_back(std::move(n));
      }
    return out;
  }

  /// <L_1 L_2 ... > for output ladder powers, summed over binomial splits.
  MomentValue expand(const std::vector<Ladder>& ladders) const {
    MomentValue total{0.0, true};
    std::vector<int> split(ladders.size(), 0);  // powers assigned to input mode 0
    for (;;) {
      double c = 1.0;
      MomentSpec s0, spi;
      for (std::size_t i = 0; i < ladders.size(); ++i) {
        const auto& l = ladders[i];
        const int j = split[i];
        c *= binomial(l.power, j) * std::pow(coef_[l.mode][0], j) * std::pow(coef_[l.mode][1], l.power - j);
        const FactorKind kind = l.dagger ? FactorKind::Ad : FactorKind::A;
        if (j > 0) s0.push_back({kind, 1, 0, j});
        if (l.power - j > 0) spi.push_back({kind, 1, 0, l.power - j});
      }
      if (c != 0.0) {
        const auto v0 = input(0, s0);
        if (v0.value != 0.0) {
          const auto v1 = input(1, spi);
          total.value += c * v0.value * v1.value;
          total.guard_ok = total.guard_ok && v0.guard_ok && v1.guard_ok;
        }
      }
      std::size_t i = 0;
      while (i < ladders.size() && split[i] == ladders[i].power) split[i++] = 0;
      if (i == ladders.size()) break;
      ++split[i];
    }
    return total;
  }

  MomentValue input(int which, const MomentSpec& spec) const {
    if (spec.empty()) return {1.0, true};
    std::string key;
    for (const auto& f : spec) key += (f.kind == FactorKind::Ad ? 'd' : 'a') + std::to_string(f.power) + ' ';
    auto& memo = memo_[which];
    const auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    const auto v = moment(in_[which], spec);
    memo.emplace(key, v);
    return v;
  }

  static double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
  }

  std::array<LabeledState, 2> in_;
  std::array<std::array<double, 2>, 2> coef_{};
  mutable std::array<std::map<std::string, MomentValue>, 2> memo_;
};

inline HigherOrderCM higher_cm(const MixedMoments& m, int k, int l) { return higher_cm_from(m, k, l); }

/// Joint homodyne distribution of the two outputs measured at a common phase
/// phi. The output quadratures are an orthogonal rotation of the input ones,
///   q_0 = sqrt(T) q_1 + sqrt(R) q_2,  q_pi = sqrt(R) q_1 - sqrt(T) q_2,
/// so P(q_1, q_2) = P_0(q_0) P_pi(q_pi) exactly, without the output state.
inline JointDistribution mixed_joint_homodyne(const DensityOp& rho0, const DensityOp& rho_pi, const BeamSplitterSpec& spec,
                                              double phi, const QuadratureAxis& axis1 = {},
                                              const QuadratureAxis& axis2 = {}, double boundary_tol = 1e-6,
                                              unsigned threads = 1) {
  spec.validate();
  const double st = std::sqrt(spec.transmittance), sr = std::sqrt(1.0 - spec.transmittance);
  const HomodyneEvaluator p0(rho0, phi), p_pi(rho_pi, phi);
  JointDistribution out{axis1, axis2, RMatrix(axis1.n, axis2.n)};
  parallel_for(static_cast<std::size_t>(axis1.n), threads, [&](std::size_t ii) {
    const double q1 = axis1.at(static_cast<int>(ii));
    for (int j = 0; j < axis2.n; ++j) {
      const double q2 = axis2.at(j);
      out.values(static_cast<Eigen::Index>(ii), j) = p0(st * q1 + sr * q2) * p_pi(sr * q1 - st * q2);
    }
  });
  const double edge = out.boundary_max();
  if (edge > boundary_tol) throw GridTooSmall("joint distribution boundary carries " + std::to_string(edge), edge);
  return out;
}

// ---------------------------------------------------------------------------
// Entanglement scans

inline const std::vector<std::pair<int, int>>& standard_pairs() {
  static const std::vector<std::pair<int, int>> pairs{{2, 1}, {1, 2}, {2, 2}, {3, 2}, {2, 3}, {4, 3},
                                                      {3, 4}, {4, 2}, {2, 4}, {5, 1}, {1, 5}, {3, 3}};
  return pairs;
}

struct ScanConfig {
  double theta0 = 0.0;
  double theta_pi = kPi;
  double kappa0 = 0.1;
  double kappa_pi = 0.1;
  double alpha_p = 5.0;
  std::vector<double> times;
  std::vector<std::pair<int, int>> pairs = standard_pairs();
  BeamSplitterSpec splitter;
  BeamSplitOptions split_options;
  double tolerance = 1e-7;
  Truncation trunc{24, 0};  // n_pump = 0 selects the default pump cutoff
  GrowthPolicy growth;
  unsigned threads = 1;
  // true: output moments in the Heisenberg picture (MixedMoments);
  // false: build the mixed two-mode state with beam_split first
  bool heisenberg = true;
};

struct ScanPoint {
  double t = 0.0;
  double xi0 = 0.0;
  double xi_pi = 0.0;
  std::vector<PPTResult> results;  // aligned with ScanConfig::pairs
  double discarded_weight = 0.0;
};

struct EntanglementScan {
  ScanConfig config;
  std::vector<ScanPoint> points;
  Truncation trunc0;  // truncations actually used for each source
  Truncation trunc_pi;
  struct Drift {
    double norm = 0.0;  // max |<psi|psi> - 1| over the trajectory
    double charge = 0.0;
  };
  Drift drift0, drift_pi;

  /// Values of one (k, l) pair across the scan.
  std::vector<double> series(int k, int l) const {
    std::size_t idx = 0;
    while (idx < config.pairs.size() && config.pairs[idx] != std::make_pair(k, l)) ++idx;
    if (idx == config.pairs.size()) throw IndexOutOfRange("pair not in scan");
    std::vector<double> out;
    for (const auto& p : points) out.push_back(p.results[idx].nu_tilde_minus);
    return out;
  }
};

/// Evolves both sources once over the whole time grid (growing truncations as
/// needed), then mixes and tests every pair at every time.
inline EntanglementScan entanglement_scan(const ScanConfig& cfg) {
  cfg.splitter.validate();
  if (cfg.pairs.empty()) throw ConfigError("entanglement scan needs at least one (k, l) pair");
  for (const auto& [k, l] : cfg.pairs)
    if (k < 1 || l < 1) throw InvalidOrder("scan orders must be >= 1");
  Truncation start = cfg.trunc;
  if (start.n_pump == 0) start.n_pump = default_pump_cutoff(cfg.alpha_p);
  GrowthPolicy growth = cfg.growth;
  if (growth.guard_levels == 0)
    for (const auto& [k, l] : cfg.pairs) growth.guard_levels = std::max(growth.guard_levels, 2 * std::max(k, l));

  auto source = [&](double kappa, double theta) {
    ModelParams mp{kappa, theta, cfg.alpha_p, cfg.times};
    return evolve_with_growth(mp, start, growth).trajectory;
  };
  const Trajectory tr0 = source(cfg.kappa0, cfg.theta0);
  const Trajectory tr_pi = source(cfg.kappa_pi, cfg.theta_pi);

  EntanglementScan scan{cfg,
                        std::vector<ScanPoint>(cfg.times.size()),
                        tr0.trunc,
                        tr_pi.trunc,
                        {tr0.max_norm_deviation(), tr0.max_charge_drift()},
                        {tr_pi.max_norm_deviation(), tr_pi.max_charge_drift()}};
  parallel_for(cfg.times.size(), cfg.threads, [&](std::size_t i) {
    const double t = cfg.times[i];
    const DensityOp r0 = signal_density(tr0, i), r_pi = signal_density(tr_pi, i);
    ScanPoint& pt = scan.points[i];
    pt.t = t;
    pt.xi0 = cfg.kappa0 * cfg.alpha_p * t;
    pt.xi_pi = cfg.kappa_pi * cfg.alpha_p * t;
    if (cfg.heisenberg) {
      const MixedMoments m(r0, r_pi, cfg.splitter);
      for (const auto& [k, l] : cfg.pairs) pt.results.push_back(ppt_test(higher_cm(m, k, l), cfg.tolerance));
    } else {
      const auto s = beam_split(r0, r_pi, cfg.splitter, cfg.split_options);
      pt.discarded_weight = s.discarded_weight;
      for (const auto& [k, l] : cfg.pairs) pt.results.push_back(ppt_test(higher_cm(s.state, k, l), cfg.tolerance));
    }
  });
  return scan;
}

}  // namespace tps
