#pragma once

// Cubic down-conversion dynamics with a dynamical pump.
//
//   H = i kappa (a^dag^3 p e^{-i theta} - a^3 p^dag e^{i theta}),  hbar = 1
//
// H commutes with the charge Q = N_a + 3 N_p, so the product space splits
// into small independent blocks. The default integrator diagonalizes each
// block once and propagates exactly; a Krylov propagator and an adaptive
// Dormand-Prince integrator on the full sparse H serve as cross-checks.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tps/fock.hpp"
#include "tps/parallel.hpp"

namespace tps {

struct ModelParams {
  double kappa = 1.0;
  double theta = 0.0;
  double alpha_p = 1.0;
  std::vector<double> times;

  /// Builds a parameter record from interaction strengths xi = kappa alpha_p t.
  static ModelParams from_xi(double kappa, double theta, double alpha_p, const std::vector<double>& xis) {
    ModelParams p{kappa, theta, alpha_p, {}};
    p.times.reserve(xis.size());
    for (double xi : xis) p.times.push_back(xi / (kappa * alpha_p));
    return p;
  }

  double xi(double t) const { return kappa * alpha_p * t; }

  void validate() const {
    if (!(kappa >= 0.0)) throw ConfigError("kappa must be >= 0");
    if (!(alpha_p > 0.0)) throw ConfigError("alpha_p must be > 0");
    if (times.empty()) throw ConfigError("time grid is empty");
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (!(times[i] >= 0.0)) throw ConfigError("times must be >= 0");
      if (i > 0 && !(times[i] > times[i - 1])) throw ConfigError("times must be strictly increasing");
    }
  }
};

/// Block of the product basis with fixed Q = n_a + 3 n_p, ordered by n_a.
struct ChargeSector {
  int charge = 0;
  std::vector<std::pair<int, int>> basis;  // (n_a, n_p)
};

/// Sectors covering every product state with n_a a multiple of 3 (the states
/// reachable from a vacuum signal), in increasing charge.
inline std::vector<ChargeSector> sector_decompose(const Truncation& trunc) {
  trunc.validate();
  std::vector<ChargeSector> sectors;
  const int jmax = trunc.n_signal / 3;
  for (int m = 0; m <= trunc.n_pump + jmax; ++m) {
    ChargeSector s{3 * m, {}};
    for (int j = 0; j <= jmax; ++j) {
      const int n_p = m - j;
      if (n_p < 0 || n_p > trunc.n_pump) continue;
      s.basis.emplace_back(3 * j, n_p);
    }
    if (!s.basis.empty()) sectors.push_back(std::move(s));
  }
  return sectors;
}

/// Every sector of the truncated product space, any signal residue mod 3.
inline std::vector<ChargeSector> all_sectors(const Truncation& trunc) {
  std::map<int, ChargeSector> by_charge;
  for (int n_a = 0; n_a <= trunc.n_signal; ++n_a)
    for (int n_p = 0; n_p <= trunc.n_pump; ++n_p) {
      auto& s = by_charge[n_a + 3 * n_p];
      s.charge = n_a + 3 * n_p;
      s.basis.emplace_back(n_a, n_p);
    }
  std::vector<ChargeSector> out;
  out.reserve(by_charge.size());
  for (auto& [q, s] : by_charge) {
    std::sort(s.basis.begin(), s.basis.end());
    out.push_back(std::move(s));
  }
  return out;
}

namespace detail {

inline double triple_ladder(int n_a) {
  return std::sqrt(static_cast<double>(n_a + 1) * (n_a + 2) * (n_a + 3));
}

}  // namespace detail

/// Full sparse Hamiltonian on the signal-major product basis.
inline Operator build_hamiltonian(const ModelParams& params, const Truncation& trunc) {
  trunc.validate();
  const cplx coupling = I * params.kappa * std::polar(1.0, -params.theta);
  std::vector<Eigen::Triplet<cplx>> t;
  for (int n_a = 0; n_a + 3 <= trunc.n_signal; ++n_a)
    for (int n_p = 1; n_p <= trunc.n_pump; ++n_p) {
      // <n_a+3, n_p-1| H |n_a, n_p> = i kappa e^{-i theta} sqrt((n_a+1)(n_a+2)(n_a+3)) sqrt(n_p)
      const cplx v = coupling * detail::triple_ladder(n_a) * std::sqrt(static_cast<double>(n_p));
      const int to = trunc.index(n_a + 3, n_p - 1);
      const int from = trunc.index(n_a, n_p);
      t.emplace_back(to, from, v);
      t.emplace_back(from, to, std::conj(v));
    }
  Operator h(trunc.product_dim(), trunc.product_dim());
  h.setFromTriplets(t.begin(), t.end());
  return h;
}

/// Dense restriction of H to one sector (basis ordered by n_a).
inline CMatrix sector_hamiltonian(const ChargeSector& sector, const ModelParams& params) {
  const int m = static_cast<int>(sector.basis.size());
  const cplx coupling = I * params.kappa * std::polar(1.0, -params.theta);
  CMatrix h = CMatrix::Zero(m, m);
  for (int j = 0; j + 1 < m; ++j) {
    const auto [n_a, n_p] = sector.basis[j];
    if (sector.basis[j + 1].first != n_a + 3) continue;
    const cplx v = coupling * detail::triple_ladder(n_a) * std::sqrt(static_cast<double>(n_p));
    h(j + 1, j) = v;
    h(j, j + 1) = std::conj(v);
  }
  return h;
}

/// |0>_signal (x) |alpha_p>_pump with a real pump amplitude.
inline StateVector initial_state(double alpha_p, const Truncation& trunc, double tail_tolerance = 1e-8) {
  trunc.validate();
  const StateVector pump = coherent_state(alpha_p, trunc.pump_dim(), tail_tolerance);
  CVector psi = CVector::Zero(trunc.product_dim());
  psi.head(trunc.pump_dim()) = pump.amplitudes;  // n_a = 0 rows
  return StateVector{std::move(psi), ProductDims{trunc.signal_dim(), trunc.pump_dim()}};
}

enum class Integrator { DenseExponential, Krylov, AdaptiveRK };

inline std::string to_string(Integrator m) {
  switch (m) {
    case Integrator::DenseExponential: return "dense-exponential";
    case Integrator::Krylov: return "krylov";
    case Integrator::AdaptiveRK: return "adaptive-rk";
  }
  return "unknown";
}

inline Integrator integrator_from_string(const std::string& s) {
  if (s == "dense-exponential") return Integrator::DenseExponential;
  if (s == "krylov") return Integrator::Krylov;
  if (s == "adaptive-rk") return Integrator::AdaptiveRK;
  throw ConfigError("unknown integrator '" + s + "'");
}

struct EvolveOptions {
  double rk_tolerance = 1e-10;      // absolute and relative, per step
  double krylov_tolerance = 1e-12;  // a-posteriori error per step
  int krylov_dim = 30;
  unsigned threads = 1;
};

struct SnapshotDiagnostics {
  double norm_deviation = 0.0;
  double charge_drift = 0.0;  // relative when <Q>(0) > 0, absolute otherwise
};

struct Trajectory {
  ModelParams params;
  Truncation trunc;
  std::vector<StateVector> states;
  std::vector<SnapshotDiagnostics> diagnostics;

  double max_norm_deviation() const {
    double m = 0.0;
    for (const auto& d : diagnostics) m = std::max(m, d.norm_deviation);
    return m;
  }
  double max_charge_drift() const {
    double m = 0.0;
    for (const auto& d : diagnostics) m = std::max(m, d.charge_drift);
    return m;
  }
};

/// <N_a + 3 N_p> on a product-basis state.
inline double charge_expectation(const StateVector& psi, const Truncation& trunc) {
  double q = 0.0;
  for (int idx = 0; idx < psi.dim(); ++idx) {
    const auto [n_a, n_p] = trunc.split(idx);
    q += std::norm(psi.amplitudes(idx)) * (n_a + 3 * n_p);
  }
  return q;
}

namespace detail {

inline std::vector<CVector> evolve_sectors(const CVector& psi0, const ModelParams& params, const Truncation& trunc,
                                           unsigned threads) {
  const auto sectors = all_sectors(trunc);
  std::vector<CVector> out(params.times.size(), CVector::Zero(psi0.size()));
  std::vector<std::vector<CVector>> pieces(sectors.size());
  parallel_for(sectors.size(), threads, [&](std::size_t s) {
    const auto& sec = sectors[s];
    const int m = static_cast<int>(sec.basis.size());
    CVector c(m);
    for (int j = 0; j < m; ++j) c(j) = psi0(trunc.index(sec.basis[j].first, sec.basis[j].second));
    if (c.squaredNorm() == 0.0) return;
    Eigen::SelfAdjointEigenSolver<CMatrix> es(sector_hamiltonian(sec, params));
    const CVector proj = es.eigenvectors().adjoint() * c;
    auto& mine = pieces[s];
    mine.reserve(params.times.size());
    for (double t : params.times) {
      CVector phased(m);
      for (int j = 0; j < m; ++j) phased(j) = proj(j) * std::polar(1.0, -es.eigenvalues()(j) * t);
      mine.push_back(es.eigenvectors() * phased);
    }
  });
  for (std::size_t s = 0; s < sectors.size(); ++s) {
    if (pieces[s].empty()) continue;
    const auto& sec = sectors[s];
    for (std::size_t k = 0; k < params.times.size(); ++k)
      for (std::size_t j = 0; j < sec.basis.size(); ++j)
        out[k](trunc.index(sec.basis[j].first, sec.basis[j].second)) = pieces[s][k](static_cast<int>(j));
  }
  return out;
}

/// One Lanczos step of exp(-i H dt) v with full reorthogonalization.
inline CVector krylov_step(const Operator& h, const CVector& v, double dt, int max_dim, double& error) {
  const double beta = v.norm();
  error = 0.0;
  if (beta == 0.0) return v;
  const int n = static_cast<int>(v.size());
  const int m_max = std::min(max_dim, n);
  CMatrix basis(n, m_max + 1);
  CMatrix hess = CMatrix::Zero(m_max + 1, m_max);
  basis.col(0) = v / beta;
  int m = m_max;
  double h_next = 0.0;
  for (int j = 0; j < m_max; ++j) {
    CVector w = h * basis.col(j);
    for (int pass = 0; pass < 2; ++pass)
      for (int i = 0; i <= j; ++i) {
        const cplx c = basis.col(i).dot(w);
        hess(i, j) += c;
        w -= c * basis.col(i);
      }
    h_next = w.norm();
    hess(j + 1, j) = h_next;
    if (h_next < 1e-13 * std::max(1.0, hess.col(j).norm())) {
      m = j + 1;
      h_next = 0.0;
      break;
    }
    basis.col(j + 1) = w / h_next;
  }
  CMatrix small = hess.topLeftCorner(m, m);
  small = 0.5 * (small + small.adjoint()).eval();
  Eigen::SelfAdjointEigenSolver<CMatrix> es(small);
  CVector phases(m);
  for (int j = 0; j < m; ++j) phases(j) = std::polar(1.0, -es.eigenvalues()(j) * dt);
  const CVector y = es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().row(0).adjoint();
  error = beta * h_next * std::abs(y(m - 1));
  return beta * (basis.leftCols(m) * y);
}

inline std::vector<CVector> evolve_krylov(const CVector& psi0, const ModelParams& params, const Truncation& trunc,
                                          const EvolveOptions& opt) {
  const Operator h = build_hamiltonian(params, trunc);
  std::vector<CVector> out;
  out.reserve(params.times.size());
  CVector psi = psi0;
  double t = 0.0;
  double dt = 0.0;
  for (double target : params.times) {
    while (t < target) {
      const double remaining = target - t;
      if (dt <= 0.0 || dt > remaining) dt = remaining;
      for (;;) {
        double err = 0.0;
        CVector next = krylov_step(h, psi, dt, opt.krylov_dim, err);
        if (err <= opt.krylov_tolerance) {
          psi = std::move(next);
          t = (dt == remaining) ? target : t + dt;
          if (err < 0.1 * opt.krylov_tolerance) dt *= 1.5;
          break;
        }
        dt *= 0.5;
        if (dt < 1e-14 * std::max(1.0, t)) throw IntegratorFailure("krylov step size underflow", t);
      }
    }
    out.push_back(psi);
  }
  return out;
}

inline std::vector<CVector> evolve_rk(const CVector& psi0, const ModelParams& params, const Truncation& trunc,
                                      const EvolveOptions& opt) {
  // Dormand-Prince 5(4) on d psi / dt = -i H psi.
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
  (void)c2, (void)c3, (void)c4, (void)c5;

  const Operator h = build_hamiltonian(params, trunc);
  const Operator mih = (-I) * h;
  auto f = [&](const CVector& y) -> CVector { return mih * y; };

  std::vector<CVector> out;
  out.reserve(params.times.size());
  CVector y = psi0;
  double t = 0.0;
  const double spectral = std::max(1e-12, h.cwiseAbs().sum() / std::max<Eigen::Index>(1, h.rows()));
  double step = 0.01 / spectral;
  CVector k1 = f(y);
  const double tol = opt.rk_tolerance;
  for (double target : params.times) {
    while (t < target) {
      const bool last = t + step >= target;
      const double hstep = last ? target - t : step;
      const CVector k2 = f(y + hstep * (a21 * k1));
      const CVector k3 = f(y + hstep * (a31 * k1 + a32 * k2));
      const CVector k4 = f(y + hstep * (a41 * k1 + a42 * k2 + a43 * k3));
      const CVector k5 = f(y + hstep * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
      const CVector k6 = f(y + hstep * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
      const CVector y_new = y + hstep * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      const CVector k7 = f(y_new);
      const CVector err = hstep * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
      double err_norm = 0.0;
      for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double scale = tol + tol * std::max(std::abs(y(i)), std::abs(y_new(i)));
        err_norm = std::max(err_norm, std::abs(err(i)) / scale);
      }
      if (err_norm <= 1.0) {
        t = last ? target : t + hstep;
        y = y_new;
        k1 = k7;
      }
      const double factor = err_norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 5.0);
      if (err_norm <= 1.0 && last) {
        // keep the proposed step for the next interval instead of the clipped one
        step = std::max(step, hstep * factor);
      } else {
        step = hstep * factor;
      }
      if (step < 1e-14 * std::max(1.0, t)) throw IntegratorFailure("adaptive-rk step size underflow", t);
    }
    out.push_back(y);
  }
  return out;
}

}  // namespace detail

/// Evolves `initial` to every time in params.times.
inline Trajectory evolve(const StateVector& initial, const ModelParams& params, const Truncation& trunc,
                         Integrator method = Integrator::DenseExponential, const EvolveOptions& opt = {}) {
  params.validate();
  trunc.validate();
  if (initial.dim() != trunc.product_dim()) throw ShapeError("initial state does not match truncation");
  if (std::abs(initial.norm() - 1.0) > 1e-10) throw InvalidState("initial state is not normalized");

  std::vector<CVector> snaps;
  switch (method) {
    case Integrator::DenseExponential: snaps = detail::evolve_sectors(initial.amplitudes, params, trunc, opt.threads); break;
    case Integrator::Krylov: snaps = detail::evolve_krylov(initial.amplitudes, params, trunc, opt); break;
    case Integrator::AdaptiveRK: snaps = detail::evolve_rk(initial.amplitudes, params, trunc, opt); break;
  }

  Trajectory traj{params, trunc, {}, {}};
  const double q0 = charge_expectation(initial, trunc);
  const ProductDims dims{trunc.signal_dim(), trunc.pump_dim()};
  for (auto& s : snaps) {
    StateVector psi{std::move(s), dims};
    const double q = charge_expectation(psi, trunc);
    SnapshotDiagnostics d;
    d.norm_deviation = std::abs(psi.norm() - 1.0);
    d.charge_drift = q0 > 0.0 ? std::abs(q - q0) / q0 : std::abs(q - q0);
    traj.diagnostics.push_back(d);
    traj.states.push_back(std::move(psi));
  }
  return traj;
}

/// Signal-mode reduction of snapshot `index`.
inline DensityOp signal_density(const Trajectory& traj, std::size_t index) {
  if (index >= traj.states.size())
    throw IndexOutOfRange("snapshot index " + std::to_string(index) + " out of range (" +
                          std::to_string(traj.states.size()) + " snapshots)");
  return reduce_pure(traj.states[index], Subsystem::First);
}

struct TruncationReport {
  double signal_top = 0.0;  // population of the top three signal levels
  double pump_top = 0.0;    // population of the top pump level
  bool signal_exact = false;  // n_signal >= 3 n_pump: no signal truncation at all
  bool adequate(double threshold) const {
    return (signal_exact || signal_top <= threshold) && pump_top <= threshold;
  }
};

inline TruncationReport truncation_report(const StateVector& psi, const Truncation& trunc) {
  TruncationReport r;
  r.signal_exact = trunc.n_signal >= 3 * trunc.n_pump;
  for (int idx = 0; idx < psi.dim(); ++idx) {
    const auto [n_a, n_p] = trunc.split(idx);
    const double w = std::norm(psi.amplitudes(idx));
    if (n_a > trunc.n_signal - 3) r.signal_top += w;
    if (n_p == trunc.n_pump) r.pump_top += w;
  }
  return r;
}

inline TruncationReport truncation_report(const Trajectory& traj) {
  TruncationReport worst;
  worst.signal_exact = traj.trunc.n_signal >= 3 * traj.trunc.n_pump;
  for (const auto& s : traj.states) {
    const auto r = truncation_report(s, traj.trunc);
    worst.signal_top = std::max(worst.signal_top, r.signal_top);
    worst.pump_top = std::max(worst.pump_top, r.pump_top);
  }
  return worst;
}

/// Reruns with larger cutoffs until the top levels are empty enough.
struct GrowthPolicy {
  double threshold = 1e-6;
  int signal_step = 6;
  int pump_step = 10;
  int max_signal = 300;
  int max_pump = 200;
  // When > 0, the signal also grows until its top `guard_levels` levels hold
  // at most `guard_tolerance` in every snapshot, so that moments whose ladder
  // order reaches that many levels pass the moment guard.
  int guard_levels = 0;
  double guard_tolerance = 1e-8;
};

/// Largest population of the top `levels` signal levels over a trajectory.
inline double signal_top_population(const Trajectory& traj, int levels) {
  double worst = 0.0;
  for (const auto& psi : traj.states) {
    double w = 0.0;
    for (int idx = 0; idx < psi.dim(); ++idx)
      if (traj.trunc.split(idx).first > traj.trunc.n_signal - levels) w += std::norm(psi.amplitudes(idx));
    worst = std::max(worst, w);
  }
  return worst;
}

struct GrownTrajectory {
  Trajectory trajectory;
  std::vector<Truncation> attempts;  // every truncation tried, last one used
};

/// Evolves |0> (x) |alpha_p> and grows the truncation per `policy`. The
/// signal cutoff grows while its top levels are populated, the pump cutoff
/// while its top level is. Throws TruncationTooSmall once the caps are hit.
inline GrownTrajectory evolve_with_growth(const ModelParams& params, Truncation trunc, const GrowthPolicy& policy = {},
                                          Integrator method = Integrator::DenseExponential,
                                          const EvolveOptions& opt = {}) {
  GrownTrajectory out;
  for (;;) {
    out.attempts.push_back(trunc);
    Trajectory traj = evolve(initial_state(params.alpha_p, trunc), params, trunc, method, opt);
    const auto report = truncation_report(traj);
    const bool guard_short = policy.guard_levels > 0 && !report.signal_exact &&
                             signal_top_population(traj, policy.guard_levels) > policy.guard_tolerance;
    if (report.adequate(policy.threshold) && !guard_short) {
      out.trajectory = std::move(traj);
      return out;
    }
    const bool grow_signal = !report.signal_exact && (report.signal_top > policy.threshold || guard_short);
    const bool grow_pump = report.pump_top > policy.threshold;
    Truncation next = trunc;
    if (grow_signal) next.n_signal = std::min(policy.max_signal, trunc.n_signal + policy.signal_step);
    if (grow_pump) next.n_pump = std::min(policy.max_pump, trunc.n_pump + policy.pump_step);
    if (next == trunc) {
      std::ostringstream os;
      os << "truncation cap reached at n_signal=" << trunc.n_signal << ", n_pump=" << trunc.n_pump
         << " (top-level populations " << report.signal_top << ", " << report.pump_top << ")";
      throw TruncationTooSmall(os.str(), std::max(report.signal_top, report.pump_top));
    }
    trunc = next;
  }
}

}  // namespace tps
