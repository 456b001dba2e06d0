#pragma once

// Higher-order quadratures x^k = (a^k + a^dag^k)/2, y^k = i(a^dag^k - a^k)/2,
// their commutator f^k = [a^k, a^dag^k]/2 (so [x^k, y^k] = i f^k), squeezing
// measures, operator moments, higher-order covariance matrices and the PPT
// eigenvalue test.
//
// Moments are evaluated on a labelled Fock basis by applying ladder operators
// analytically to each basis ket, so no operator is ever truncated: the result
// is the exact trace against the represented (truncated) state. The guard flag
// records whether that state is itself trustworthy at the requested order.

#include <array>
#include <cmath>
#include <regex>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "tps/fock.hpp"

namespace tps {

/// f_n^k = ((n+k)!/n! - n!/(n-k)!)/2, second term zero for n < k.
inline double f_value(int k, int n) {
  double up = 1.0;
  for (int j = n + 1; j <= n + k; ++j) up *= j;
  double down = 0.0;
  if (n >= k) {
    down = 1.0;
    for (int j = n - k + 1; j <= n; ++j) down *= j;
  }
  return 0.5 * (up - down);
}

struct QuadPair {
  int k = 1;
  Operator x;
  Operator y;
  Operator f;
};

inline QuadPair quad_pair(int k, int dim) {
  if (k < 1) throw InvalidOrder("quadrature order must be >= 1, got " + std::to_string(k));
  if (k >= dim) throw InvalidOrder("quadrature order " + std::to_string(k) + " needs dim > k, got " + std::to_string(dim));
  const Operator ak = annihilation_power(k, dim);
  const Operator adk = ak.adjoint();
  QuadPair q;
  q.k = k;
  q.x = 0.5 * (ak + adk);
  q.y = (0.5 * I) * (adk - ak);
  std::vector<Eigen::Triplet<cplx>> t;
  for (int n = 0; n < dim; ++n) t.emplace_back(n, n, f_value(k, n));
  q.f.resize(dim, dim);
  q.f.setFromTriplets(t.begin(), t.end());
  return q;
}

// ---------------------------------------------------------------------------
// Labelled states

/// Photon numbers of a basis ket; single-mode states use label[1] = 0.
using Label = std::array<int, 2>;

/// Density matrix over an explicit list of Fock labels (a full product basis,
/// a single mode, or a compressed two-mode basis).
class LabeledState {
public:
  LabeledState() = default;

  LabeledState(std::vector<Label> labels, DensityOp rho, int modes) : labels_(std::move(labels)), rho_(std::move(rho)), modes_(modes) {
    if (static_cast<int>(labels_.size()) != rho_.dim()) throw ShapeError("label count does not match density matrix");
    for (int i = 0; i < static_cast<int>(labels_.size()); ++i) {
      cutoff_[0] = std::max(cutoff_[0], labels_[i][0]);
      cutoff_[1] = std::max(cutoff_[1], labels_[i][1]);
      if (!lookup_.emplace(key(labels_[i]), i).second) throw ShapeError("duplicate basis label");
    }
  }

  static LabeledState single(const DensityOp& rho) {
    std::vector<Label> labels;
    for (int n = 0; n < rho.dim(); ++n) labels.push_back({n, 0});
    return LabeledState(std::move(labels), rho, 1);
  }

  static LabeledState product(const DensityOp& rho, ProductDims dims) {
    if (rho.dim() != dims.size()) throw ShapeError("two-mode state does not match declared dimensions");
    std::vector<Label> labels;
    for (int i = 0; i < dims.size(); ++i) {
      const auto [a, b] = dims.split(i);
      labels.push_back({a, b});
    }
    return LabeledState(std::move(labels), rho, 2);
  }

  int modes() const { return modes_; }
  int size() const { return static_cast<int>(labels_.size()); }
  const std::vector<Label>& labels() const { return labels_; }
  const DensityOp& rho() const { return rho_; }
  /// Largest photon number represented in mode 0 or 1.
  int cutoff(int mode) const { return cutoff_[mode]; }

  int find(const Label& l) const {
    const auto it = lookup_.find(key(l));
    return it == lookup_.end() ? -1 : it->second;
  }

  /// Marginal photon-number distribution of one mode.
  RVector marginal(int mode) const {
    RVector p = RVector::Zero(cutoff_[mode] + 1);
    for (int i = 0; i < size(); ++i) p(labels_[i][mode]) += rho_(i, i).real();
    return p;
  }

  /// Population carried by the top `levels` photon numbers of `mode`.
  double top_population(int mode, int levels) const {
    const RVector p = marginal(mode);
    double s = 0.0;
    for (int n = std::max(0, cutoff_[mode] - levels + 1); n <= cutoff_[mode]; ++n) s += p(n);
    return s;
  }

private:
  static long long key(const Label& l) { return (static_cast<long long>(l[0]) << 32) | static_cast<unsigned>(l[1]); }

  std::vector<Label> labels_;
  DensityOp rho_;
  int modes_ = 1;
  Label cutoff_{0, 0};
  std::unordered_map<long long, int> lookup_;
};

// ---------------------------------------------------------------------------
// Moment specifications

enum class FactorKind { A, Ad, X, Y, F, N };

struct MomentFactor {
  FactorKind kind = FactorKind::A;
  int order = 1;
  int mode = 0;  // 0-based
  int power = 1;

  /// Ladder order contributed to the total (guard bookkeeping).
  int ladder_order() const {
    const int per = (kind == FactorKind::F || kind == FactorKind::N) ? 0 : order;
    return per * power;
  }
};

using MomentSpec = std::vector<MomentFactor>;

/// Parses a whitespace or '*' separated product such as "x(3)_1^2 ad_2 a(2)_2".
/// Factor grammar: kind["(" order ")"]["_" mode]["^" power] with kind one of
/// a, ad, x, y, f, n; order, mode and power default to 1. Operators act in
/// the written order (rightmost first on kets).
inline MomentSpec parse_moment(const std::string& text) {
  static const std::regex factor_re(R"(^(ad|a|x|y|f|n)(?:\((\d+)\))?(?:_(\d+))?(?:\^(\d+))?$)");
  MomentSpec spec;
  std::string cleaned = text;
  for (char& c : cleaned)
    if (c == '*') c = ' ';
  std::istringstream in(cleaned);
  std::string tok;
  while (in >> tok) {
    std::smatch m;
    if (!std::regex_match(tok, m, factor_re)) throw MomentSpecError("malformed moment factor '" + tok + "'");
    MomentFactor f;
    const std::string kind = m[1];
    f.kind = kind == "a" ? FactorKind::A
             : kind == "ad" ? FactorKind::Ad
             : kind == "x" ? FactorKind::X
             : kind == "y" ? FactorKind::Y
             : kind == "f" ? FactorKind::F
                           : FactorKind::N;
    if (m[2].matched) f.order = std::stoi(m[2]);
    if (m[3].matched) f.mode = std::stoi(m[3]) - 1;
    if (m[4].matched) f.power = std::stoi(m[4]);
    if (f.order < 1) throw MomentSpecError("order must be >= 1 in '" + tok + "'");
    if (f.kind == FactorKind::N && f.order != 1) throw MomentSpecError("number operator takes no order in '" + tok + "'");
    if (f.mode < 0 || f.mode > 1) throw MomentSpecError("mode must be 1 or 2 in '" + tok + "'");
    if (f.power < 1) throw MomentSpecError("power must be >= 1 in '" + tok + "'");
    spec.push_back(f);
  }
  if (spec.empty()) throw MomentSpecError("empty moment specification");
  return spec;
}

inline MomentSpec quadrature_factor(char axis, int order, int mode, int power = 1) {
  return {MomentFactor{axis == 'x' ? FactorKind::X : FactorKind::Y, order, mode, power}};
}

inline MomentSpec concat(MomentSpec a, const MomentSpec& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

namespace detail {

struct Term {
  Label label;
  cplx amp;
};

inline double falling(int n, int k) {  // sqrt(n!/(n-k)!)
  double v = 1.0;
  for (int j = n - k + 1; j <= n; ++j) v *= std::sqrt(static_cast<double>(j));
  return v;
}

inline void apply_factor(const MomentFactor& f, std::vector<Term>& terms) {
  for (int rep = 0; rep < f.power; ++rep) {
    std::vector<Term> out;
    out.reserve(terms.size() * 2);
    for (const auto& t : terms) {
      const int n = t.label[f.mode];
      auto lowered = [&](cplx c) {
        if (n < f.order) return;
        Label l = t.label;
        l[f.mode] = n - f.order;
        out.push_back({l, c * falling(n, f.order) * t.amp});
      };
      auto raised = [&](cplx c) {
        Label l = t.label;
        l[f.mode] = n + f.order;
        out.push_back({l, c * falling(n + f.order, f.order) * t.amp});
      };
      switch (f.kind) {
        case FactorKind::A: lowered(1.0); break;
        case FactorKind::Ad: raised(1.0); break;
        case FactorKind::X: lowered(0.5); raised(0.5); break;
        case FactorKind::Y: lowered(-0.5 * I); raised(0.5 * I); break;
        case FactorKind::F: out.push_back({t.label, f_value(f.order, n) * t.amp}); break;
        case FactorKind::N: out.push_back({t.label, static_cast<double>(n) * t.amp}); break;
      }
    }
    terms.swap(out);
  }
}

}  // namespace detail

struct MomentValue {
  cplx value;
  bool guard_ok = true;
};

/// Top-level population check: a product of ladder order m per mode is only
/// trusted when the top m levels of that mode hold <= tolerance.
inline bool guard_ok(const LabeledState& s, const MomentSpec& spec, double tolerance = 1e-8) {
  std::array<int, 2> order{0, 0};
  for (const auto& f : spec) order[f.mode] += f.ladder_order();
  for (int m = 0; m < s.modes(); ++m)
    if (order[m] > 0 && s.top_population(m, order[m]) > tolerance) return false;
  return true;
}

/// tr(O rho) for O the ordered product in `spec`.
inline MomentValue moment(const LabeledState& s, const MomentSpec& spec, double guard_tolerance = 1e-8) {
  for (const auto& f : spec)
    if (f.mode >= s.modes()) throw MomentSpecError("moment refers to mode " + std::to_string(f.mode + 1) + " of a " +
                                                   std::to_string(s.modes()) + "-mode state");
  const CMatrix& rho = s.rho().matrix();
  cplx total = 0.0;
  std::vector<detail::Term> terms;
  for (int j = 0; j < s.size(); ++j) {
    terms.assign(1, {s.labels()[j], 1.0});
    for (auto it = spec.rbegin(); it != spec.rend(); ++it) detail::apply_factor(*it, terms);
    for (const auto& t : terms) {
      const int i = s.find(t.label);
      if (i >= 0) total += t.amp * rho(j, i);  // <i|O|j> rho_ji
    }
  }
  return {total, guard_ok(s, spec, guard_tolerance)};
}

inline MomentValue moment(const LabeledState& s, const std::string& spec) { return moment(s, parse_moment(spec)); }

inline MomentValue moment(const DensityOp& rho, const std::string& spec) {
  return moment(LabeledState::single(rho), parse_moment(spec));
}

// ---------------------------------------------------------------------------
// Squeezing

enum class Axis { X, Y };

inline char axis_char(Axis a) { return a == Axis::X ? 'x' : 'y'; }

struct QuadratureStats {
  double mean = 0.0;
  double second = 0.0;  // <(o^k)^2>
  double f_mean = 0.0;  // <f^k>
  bool guard_ok = true;
  double variance() const { return second - mean * mean; }
};

inline QuadratureStats quadrature_stats(const LabeledState& s, int k, Axis axis, int mode = 0) {
  if (k < 1) throw InvalidOrder("quadrature order must be >= 1, got " + std::to_string(k));
  const auto one = quadrature_factor(axis_char(axis), k, mode);
  const auto two = quadrature_factor(axis_char(axis), k, mode, 2);
  const auto m1 = moment(s, one);
  const auto m2 = moment(s, two);
  const auto mf = moment(s, MomentSpec{MomentFactor{FactorKind::F, k, mode, 1}});
  return {m1.value.real(), m2.value.real(), mf.value.real(), m2.guard_ok};
}

inline QuadratureStats quadrature_stats(const DensityOp& rho, int k, Axis axis) {
  return quadrature_stats(LabeledState::single(rho), k, axis);
}

/// S = 2 Var(o^k) / <f^k>; S < 1 is squeezing.
inline double squeezing_S(const DensityOp& rho, int k, Axis axis, double tolerance = 1e-14) {
  const auto st = quadrature_stats(rho, k, axis);
  if (!(st.f_mean > tolerance))
    throw DegenerateNormalization("<f^" + std::to_string(k) + "> = " + std::to_string(st.f_mean) + " is not positive");
  return 2.0 * st.variance() / st.f_mean;
}

/// M = Var(o^k) - <f^k>/2; M < 0 is squeezing.
inline double squeezing_M(const DensityOp& rho, int k, Axis axis) {
  const auto st = quadrature_stats(rho, k, axis);
  return st.variance() - 0.5 * st.f_mean;
}

// ---------------------------------------------------------------------------
// Higher-order covariance matrix and PPT test

struct HigherOrderCM {
  int k = 1;
  int l = 1;
  Eigen::Matrix4d V = Eigen::Matrix4d::Zero();
  Eigen::Matrix4d omega = Eigen::Matrix4d::Zero();
  double f_k = 0.0;
  double f_l = 0.0;
  bool guard_ok = true;

  /// Smallest eigenvalue of V + (i/2) omega; >= 0 for physical states.
  double uncertainty_min_eigenvalue() const {
    const Eigen::Matrix4cd m = V.cast<cplx>() + (0.5 * I) * omega.cast<cplx>();
    return Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd>(m, Eigen::EigenvaluesOnly).eigenvalues()(0);
  }
};

inline Eigen::Matrix4d omega_matrix(double f_k, double f_l) {
  Eigen::Matrix4d o = Eigen::Matrix4d::Zero();
  o(0, 1) = f_k;
  o(1, 0) = -f_k;
  o(2, 3) = f_l;
  o(3, 2) = -f_l;
  return o;
}

/// Covariances of r = (x_1^k, y_1^k, x_2^l, y_2^l) from any two-mode moment
/// evaluator `m(MomentSpec) -> MomentValue`.
template <class MomentFn>
HigherOrderCM higher_cm_from(MomentFn&& m, int k, int l) {
  if (k < 1 || l < 1) throw InvalidOrder("covariance orders must be >= 1");
  const std::array<MomentSpec, 4> r{quadrature_factor('x', k, 0), quadrature_factor('y', k, 0),
                                    quadrature_factor('x', l, 1), quadrature_factor('y', l, 1)};
  HigherOrderCM cm;
  cm.k = k;
  cm.l = l;
  std::array<double, 4> mean{};
  for (int i = 0; i < 4; ++i) mean[i] = m(r[i]).value.real();
  for (int i = 0; i < 4; ++i)
    for (int j = i; j < 4; ++j) {
      const MomentValue ij = m(concat(r[i], r[j]));
      cm.guard_ok = cm.guard_ok && ij.guard_ok;
      double sym;
      if (i == j) {
        sym = ij.value.real();
      } else {
        const MomentValue ji = m(concat(r[j], r[i]));
        sym = 0.5 * (ij.value + ji.value).real();
      }
      cm.V(i, j) = cm.V(j, i) = sym - mean[i] * mean[j];
    }
  cm.f_k = m(MomentSpec{MomentFactor{FactorKind::F, k, 0, 1}}).value.real();
  cm.f_l = m(MomentSpec{MomentFactor{FactorKind::F, l, 1, 1}}).value.real();
  cm.omega = omega_matrix(cm.f_k, cm.f_l);
  return cm;
}

inline HigherOrderCM higher_cm(const LabeledState& s, int k, int l) {
  if (s.modes() != 2) throw ShapeError("higher_cm needs a two-mode state");
  return higher_cm_from([&](const MomentSpec& spec) { return moment(s, spec); }, k, l);
}

inline HigherOrderCM higher_cm(const DensityOp& rho12, ProductDims dims, int k, int l) {
  return higher_cm(LabeledState::product(rho12, dims), k, l);
}

struct PPTResult {
  int k = 1;
  int l = 1;
  double nu_tilde_minus = 0.0;
  bool entangled = false;
  bool guard_ok = true;

  /// "entangled" or "inconclusive": the test is necessary-only, so a
  /// nonnegative value never certifies separability.
  std::string verdict() const { return entangled ? "entangled" : "inconclusive"; }
};

/// Smallest eigenvalue of Lambda V Lambda + (i/2) omega with
/// Lambda = diag(1, 1, 1, -1); omega is left unchanged.
inline PPTResult ppt_test(const HigherOrderCM& cm, double tolerance = 1e-7) {
  Eigen::Matrix4d lambda = Eigen::Matrix4d::Identity();
  lambda(3, 3) = -1.0;
  const Eigen::Matrix4d vt = lambda * cm.V * lambda;
  const Eigen::Matrix4cd m = vt.cast<cplx>() + (0.5 * I) * cm.omega.cast<cplx>();
  const double nu = Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd>(m, Eigen::EigenvaluesOnly).eigenvalues()(0);
  return {cm.k, cm.l, nu, nu < -tolerance, cm.guard_ok};
}

}  // namespace tps
