#pragma once

// Phase-space and entropic non-Gaussianity measures.
//
// Phase-space convention: X = (a + a^dag)/sqrt(2), P = i(a^dag - a)/sqrt(2), so
// vacuum has variance 1/2 and W_vac(0,0) = 1/pi. This is sqrt(2) times the
// first-order quadratures of the quadratures module.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tps/fock.hpp"
#include "tps/parallel.hpp"
#include "tps/quadratures.hpp"

namespace tps {

// ---------------------------------------------------------------------------
// Wigner function

struct GridSpec {
  double x_min = -5.0;
  double x_max = 5.0;
  double p_min = -5.0;
  double p_max = 5.0;
  int n_x = 241;
  int n_p = 241;

  double dx() const { return (x_max - x_min) / (n_x - 1); }
  double dp() const { return (p_max - p_min) / (n_p - 1); }
  double x(int i) const { return x_min + i * dx(); }
  double p(int j) const { return p_min + j * dp(); }

  void validate() const {
    if (n_x < 3 || n_p < 3) throw ConfigError("grid needs at least 3 points per axis");
    if (!(x_max > x_min) || !(p_max > p_min)) throw ConfigError("grid bounds must be increasing");
  }
};

struct WignerGrid {
  GridSpec spec;
  RMatrix values;  // values(i, j) = W(x_i, p_j)
  double imaginary_residue = 0.0;

  double cell() const { return spec.dx() * spec.dp(); }
  double normalization() const { return values.sum() * cell(); }

  double boundary_max() const {
    const auto& v = values;
    const Eigen::Index r = v.rows() - 1, c = v.cols() - 1;
    return std::max({v.row(0).cwiseAbs().maxCoeff(), v.row(r).cwiseAbs().maxCoeff(), v.col(0).cwiseAbs().maxCoeff(),
                     v.col(c).cwiseAbs().maxCoeff()});
  }
};

namespace detail {

/// Normalized Laguerre functions l_n^(k)(x) = sqrt(n!/(n+k)!) x^{k/2} e^{-x/2} L_n^(k)(x)
/// for n = 0..count-1, by a three-term recurrence that stays O(1) in magnitude.
inline void laguerre_functions(int k, int count, double x, double* out) {
  if (count <= 0) return;
  double l0;
  if (k == 0) {
    l0 = std::exp(-0.5 * x);
  } else if (x <= 0.0) {
    l0 = 0.0;
  } else {
    l0 = std::exp(0.5 * k * std::log(x) - 0.5 * x - 0.5 * std::lgamma(k + 1.0));
  }
  out[0] = l0;
  if (count == 1) return;
  out[1] = (1.0 + k - x) * l0 / std::sqrt(1.0 + k);
  for (int n = 1; n + 1 < count; ++n) {
    out[n + 1] = ((2.0 * n + 1 + k - x) * out[n] - std::sqrt(double(n) * (n + k)) * out[n - 1]) /
                 std::sqrt((n + 1.0) * (n + k + 1.0));
  }
}

/// Off-diagonals of rho that carry any weight; zero diagonals are skipped.
inline std::vector<int> active_diagonals(const CMatrix& rho) {
  std::vector<int> ks;
  for (int k = 0; k < rho.rows(); ++k) {
    const double w = rho.diagonal(-k).cwiseAbs().maxCoeff();
    if (w > 0.0) ks.push_back(k);
  }
  return ks;
}

}  // namespace detail

/// Wigner function evaluator for one density matrix, reusable across points.
///
/// W(r, phi) = sum_k Re(e^{-i k phi} A_k(r)); the radial coefficients A_k
/// carry all the cost and are shared by grid points on the same circle.
class WignerEvaluator {
public:
  explicit WignerEvaluator(const DensityOp& rho) : rho_(rho.matrix()), ks_(detail::active_diagonals(rho_)) {}

  /// A_k for every active diagonal k, at 4|alpha|^2 = r2.
  std::vector<cplx> radial(double r2) const {
    const int d = static_cast<int>(rho_.rows());
    std::vector<double> l(d);
    std::vector<cplx> a(ks_.size());
    for (std::size_t q = 0; q < ks_.size(); ++q) {
      const int k = ks_[q];
      const int count = d - k;
      detail::laguerre_functions(k, count, r2, l.data());
      cplx s = 0.0;
      for (int n = 0; n < count; ++n) s += ((n % 2 == 0) ? l[n] : -l[n]) * rho_(n + k, n);
      a[q] = (k == 0 ? 1.0 : 2.0) * s;
    }
    return a;
  }

  double angular(const std::vector<cplx>& a, double phi) const {
    double w = 0.0;
    for (std::size_t q = 0; q < ks_.size(); ++q) w += (a[q] * std::polar(1.0, -ks_[q] * phi)).real();
    return w / kPi;
  }

  double operator()(double x, double p) const { return angular(radial(2.0 * (x * x + p * p)), std::atan2(p, x)); }

private:
  CMatrix rho_;
  std::vector<int> ks_;
};

inline double wigner_point(const DensityOp& rho, double x, double p) { return WignerEvaluator(rho)(x, p); }

namespace detail {

/// Radial coefficients for every grid point, computed once per distinct radius.
struct RadialTable {
  int n_p = 0;
  std::vector<int> point_radius;
  std::vector<std::vector<cplx>> coeffs;

  RadialTable(const WignerEvaluator& eval, const GridSpec& spec, unsigned threads) : n_p(spec.n_p) {
    std::unordered_map<double, int> radius_index;
    std::vector<double> radii;
    point_radius.resize(static_cast<std::size_t>(spec.n_x) * spec.n_p);
    for (int i = 0; i < spec.n_x; ++i)
      for (int j = 0; j < spec.n_p; ++j) {
        const double x = spec.x(i), p = spec.p(j);
        const double r2 = 2.0 * (x * x + p * p);
        const auto [it, fresh] = radius_index.emplace(r2, static_cast<int>(radii.size()));
        if (fresh) radii.push_back(r2);
        point_radius[static_cast<std::size_t>(i) * spec.n_p + j] = it->second;
      }
    coeffs.resize(radii.size());
    parallel_for(radii.size(), threads, [&](std::size_t r) { coeffs[r] = eval.radial(radii[r]); });
  }

  const std::vector<cplx>& at(int i, int j) const {
    return coeffs[point_radius[static_cast<std::size_t>(i) * n_p + j]];
  }
};

}  // namespace detail

/// W on a grid. Throws GridTooSmall if the boundary carries |W| > boundary_tol.
inline WignerGrid wigner(const DensityOp& rho, const GridSpec& spec = {}, double boundary_tol = 1e-6,
                         unsigned threads = 1) {
  spec.validate();
  const WignerEvaluator eval(rho);
  WignerGrid g;
  g.spec = spec;
  g.values.resize(spec.n_x, spec.n_p);
  g.imaginary_residue = detail::hermiticity_error(rho.matrix());

  const auto table = detail::RadialTable(eval, spec, threads);
  parallel_for(static_cast<std::size_t>(spec.n_x), threads, [&](std::size_t i) {
    const double x = spec.x(static_cast<int>(i));
    for (int j = 0; j < spec.n_p; ++j)
      g.values(static_cast<Eigen::Index>(i), j) = eval.angular(table.at(static_cast<int>(i), j), std::atan2(spec.p(j), x));
  });
  const double edge = g.boundary_max();
  if (edge > boundary_tol)
    throw GridTooSmall("Wigner grid boundary carries |W| = " + std::to_string(edge), edge);
  return g;
}

/// Standard deviations of X and P and their means (vacuum variance 1/2).
struct PhaseSpaceSpread {
  double mean_x = 0.0, mean_p = 0.0, sigma_x = 0.0, sigma_p = 0.0;
};

inline PhaseSpaceSpread phase_space_spread(const DensityOp& rho) {
  const auto s = LabeledState::single(rho);
  const double mx = std::sqrt(2.0) * moment(s, "x").value.real();
  const double mp = std::sqrt(2.0) * moment(s, "y").value.real();
  const double xx = 2.0 * moment(s, "x^2").value.real();
  const double pp = 2.0 * moment(s, "y^2").value.real();
  return {mx, mp, std::sqrt(std::max(0.0, xx - mx * mx)), std::sqrt(std::max(0.0, pp - mp * mp))};
}

/// Square grid centred at the origin with the spacing of `base`, at least
/// five standard deviations wide, enlarged until the boundary is empty.
inline WignerGrid wigner_auto(const DensityOp& rho, const GridSpec& base = {}, double boundary_tol = 1e-6,
                              unsigned threads = 1, int max_expansions = 12) {
  base.validate();
  const double h = std::min(base.dx(), base.dp());
  const auto sp = phase_space_spread(rho);
  double half = std::max({-base.x_min, base.x_max, -base.p_min, base.p_max,
                          std::abs(sp.mean_x) + 5.0 * sp.sigma_x, std::abs(sp.mean_p) + 5.0 * sp.sigma_p});
  for (int attempt = 0;; ++attempt) {
    const int half_n = static_cast<int>(std::ceil(half / h - 1e-9));
    GridSpec spec{-half_n * h, half_n * h, -half_n * h, half_n * h, 2 * half_n + 1, 2 * half_n + 1};
    try {
      return wigner(rho, spec, boundary_tol, threads);
    } catch (const GridTooSmall&) {
      if (attempt >= max_expansions) throw;
      half *= 1.25;
    }
  }
}

struct NegativityResult {
  double value = 0.0;
  double error_estimate = 0.0;  // Richardson estimate from the 2h subsample
};

/// (1/2) sum (|W| - W) dX dP by the midpoint rule, with a Richardson error
/// estimate obtained from every second sample.
inline NegativityResult wigner_negativity(const WignerGrid& g) {
  auto neg = [&](int stride) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < g.values.rows(); i += stride)
      for (Eigen::Index j = 0; j < g.values.cols(); j += stride) {
        const double w = g.values(i, j);
        if (w < 0.0) s -= w;
      }
    return s * g.cell() * stride * stride;
  };
  const double fine = neg(1);
  const double coarse = neg(2);
  return {fine, std::abs(fine - coarse) / 3.0};
}

/// Automatic grid refined until the negativity quadrature meets `budget`:
/// the spacing shrinks by 0.7 while the Richardson estimate exceeds it, at
/// most `max_refinements` times.
inline WignerGrid wigner_for_negativity(const DensityOp& rho, const GridSpec& base = {}, double budget = 1e-4,
                                        unsigned threads = 1, int max_refinements = 3) {
  GridSpec spec = base;
  for (int k = 0;; ++k) {
    WignerGrid g = wigner_auto(rho, spec, 1e-6, threads);
    if (wigner_negativity(g).error_estimate <= budget || k >= max_refinements) return g;
    spec.n_x = 2 * static_cast<int>(std::ceil((spec.n_x - 1) / 2 / 0.7)) + 1;
    spec.n_p = 2 * static_cast<int>(std::ceil((spec.n_p - 1) / 2 / 0.7)) + 1;
  }
}

/// max |W(R x) - W(x)| over the grid points, R the rotation by `angle`.
/// W is evaluated exactly at the rotated points: a rotation keeps the radius,
/// so only the angular sum changes.
inline double rotation_residual(const DensityOp& rho, const WignerGrid& g, double angle, unsigned threads = 1) {
  const WignerEvaluator eval(rho);
  const detail::RadialTable table(eval, g.spec, threads);
  std::vector<double> row_worst(g.spec.n_x, 0.0);
  parallel_for(static_cast<std::size_t>(g.spec.n_x), threads, [&](std::size_t ii) {
    const int i = static_cast<int>(ii);
    for (int j = 0; j < g.spec.n_p; ++j) {
      const double w = eval.angular(table.at(i, j), std::atan2(g.spec.p(j), g.spec.x(i)) + angle);
      row_worst[ii] = std::max(row_worst[ii], std::abs(w - g.values(i, j)));
    }
  });
  return *std::max_element(row_worst.begin(), row_worst.end());
}

/// Residual under the 120 degree rotation by default.
inline double symmetry_residual(const DensityOp& rho, const WignerGrid& g, double angle = 2.0 * kPi / 3.0,
                                unsigned threads = 1) {
  return rotation_residual(rho, g, angle, threads);
}

// ---------------------------------------------------------------------------
// Entropies

inline double von_neumann_entropy(const DensityOp& rho) {
  const RVector ev = rho.eigenvalues();
  if (ev.size() > 0 && ev.minCoeff() < -1e-9)
    throw InvalidState("negative eigenvalue " + std::to_string(ev.minCoeff()) + " in entropy");
  double s = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    const double l = std::clamp(ev(i), 0.0, 1.0);
    if (l > 1e-14) s -= l * std::log(l);
  }
  return s;
}

struct GaussianRef {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cm = Eigen::Matrix2d::Zero();
  double nu = 0.5;
};

/// First and second moments of (X, P) = sqrt(2) (x, y).
inline GaussianRef gaussian_reference(const DensityOp& rho) {
  const auto s = LabeledState::single(rho);
  GaussianRef g;
  const double mx = moment(s, "x").value.real(), my = moment(s, "y").value.real();
  const double xx = moment(s, "x^2").value.real(), yy = moment(s, "y^2").value.real();
  const double xy = 0.5 * (moment(s, "x y").value + moment(s, "y x").value).real();
  g.mean = std::sqrt(2.0) * Eigen::Vector2d(mx, my);
  g.cm << 2.0 * (xx - mx * mx), 2.0 * (xy - mx * my), 2.0 * (xy - mx * my), 2.0 * (yy - my * my);
  g.nu = std::sqrt(std::max(0.0, g.cm.determinant()));
  return g;
}

/// f(nu) = (nu + 1/2) ln(nu + 1/2) - (nu - 1/2) ln(nu - 1/2).
inline double gaussian_entropy(double nu) {
  if (nu < 0.5 - 1e-9) throw UnphysicalCovariance("symplectic eigenvalue " + std::to_string(nu) + " < 1/2");
  const double up = nu + 0.5, down = nu - 0.5;
  return up * std::log(up) - (down > 0.0 ? down * std::log(down) : 0.0);
}

inline double gaussian_entropy(const GaussianRef& ref) { return gaussian_entropy(ref.nu); }

/// delta = S(Gaussian reference) - S(rho), with S = -tr rho ln rho.
inline double relative_entropy_nongaussianity(const DensityOp& rho) {
  return gaussian_entropy(gaussian_reference(rho)) - von_neumann_entropy(rho);
}

// ---------------------------------------------------------------------------
// Homodyne distributions

namespace detail {

/// Hermite functions psi_0..psi_{count-1} at q (vacuum variance 1/2).
inline void hermite_functions(int count, double q, double* out) {
  if (count <= 0) return;
  out[0] = std::pow(kPi, -0.25) * std::exp(-0.5 * q * q);
  if (count == 1) return;
  out[1] = std::sqrt(2.0) * q * out[0];
  for (int n = 1; n + 1 < count; ++n)
    out[n + 1] = std::sqrt(2.0 / (n + 1)) * q * out[n] - std::sqrt(double(n) / (n + 1)) * out[n - 1];
}

/// <q_phi|n> = e^{-i n phi} psi_n(q) for n < count.
inline CVector quadrature_kets(int count, double q, double phi) {
  std::vector<double> h(count);
  hermite_functions(count, q, h.data());
  CVector v(count);
  for (int n = 0; n < count; ++n) v(n) = h[n] * std::polar(1.0, -n * phi);
  return v;
}

}  // namespace detail

struct QuadratureAxis {
  double min = -5.0;
  double max = 5.0;
  int n = 241;
  double step() const { return (max - min) / (n - 1); }
  double at(int i) const { return min + i * step(); }
};

struct HomodyneDistribution {
  QuadratureAxis axis;
  RVector values;
  double normalization() const { return values.sum() * axis.step(); }
};

/// P(q) = <q_phi| rho |q_phi>; phi = 0 measures X, phi = pi/2 measures P.
inline HomodyneDistribution homodyne(const DensityOp& rho, double phi, const QuadratureAxis& axis = {}) {
  HomodyneDistribution out{axis, RVector(axis.n)};
  for (int i = 0; i < axis.n; ++i) {
    const CVector v = detail::quadrature_kets(rho.dim(), axis.at(i), phi);
    out.values(i) = (v.transpose() * rho.matrix() * v.conjugate()).value().real();
  }
  return out;
}

/// P(q) at arbitrary points: rho = C C^dag from its eigen-decomposition, so
/// each evaluation costs one ket and one small matrix-vector product.
class HomodyneEvaluator {
public:
  HomodyneEvaluator(const DensityOp& rho, double phi) : phi_(phi), dim_(rho.dim()) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(rho.matrix());
    std::vector<int> keep;
    for (int i = 0; i < dim_; ++i)
      if (es.eigenvalues()(i) > 0.0) keep.push_back(i);
    c_.resize(dim_, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j)
      c_.col(static_cast<Eigen::Index>(j)) = std::sqrt(es.eigenvalues()(keep[j])) * es.eigenvectors().col(keep[j]);
  }

  double operator()(double q) const {
    const CVector v = detail::quadrature_kets(dim_, q, phi_);
    return (c_.transpose() * v).squaredNorm();
  }

private:
  double phi_;
  int dim_;
  CMatrix c_;
};

struct JointDistribution {
  QuadratureAxis axis1, axis2;
  RMatrix values;  // values(i, j) = P(q1_i, q2_j)
  double normalization() const { return values.sum() * axis1.step() * axis2.step(); }
  double boundary_max() const {
    const auto& v = values;
    return std::max({v.row(0).cwiseAbs().maxCoeff(), v.row(v.rows() - 1).cwiseAbs().maxCoeff(),
                     v.col(0).cwiseAbs().maxCoeff(), v.col(v.cols() - 1).cwiseAbs().maxCoeff()});
  }
  RVector marginal_first() const { return values.rowwise().sum() * axis2.step(); }
};

/// Joint homodyne distribution of a two-mode state for quadrature angles
/// (phi1, phi2). Throws GridTooSmall when the boundary carries > boundary_tol.
inline JointDistribution homodyne_joint(const LabeledState& s, double phi1, double phi2, const QuadratureAxis& axis1 = {},
                                        const QuadratureAxis& axis2 = {}, double boundary_tol = 1e-6,
                                        unsigned threads = 1) {
  if (s.modes() != 2) throw ShapeError("homodyne_joint needs a two-mode state");
  const int d1 = s.cutoff(0) + 1, d2 = s.cutoff(1) + 1;
  const auto& labels = s.labels();
  const int L = s.size();
  // the threefold symmetry leaves most entries exactly zero
  std::vector<Eigen::Triplet<cplx>> nz;
  for (int b = 0; b < L; ++b)
    for (int a = 0; a < L; ++a)
      if (s.rho()(a, b) != 0.0) nz.emplace_back(a, b, s.rho()(a, b));
  Eigen::SparseMatrix<cplx, Eigen::RowMajor> rho(L, L);
  rho.setFromTriplets(nz.begin(), nz.end());

  // mode-2 kets for every q2, as rows
  CMatrix v2(axis2.n, d2);
  for (int j = 0; j < axis2.n; ++j) v2.row(j) = detail::quadrature_kets(d2, axis2.at(j), phi2).transpose();

  JointDistribution out{axis1, axis2, RMatrix(axis1.n, axis2.n)};
  parallel_for(static_cast<std::size_t>(axis1.n), threads, [&](std::size_t ii) {
    const int i = static_cast<int>(ii);
    const CVector u = detail::quadrature_kets(d1, axis1.at(i), phi1);
    // conditional mode-2 operator after projecting mode 1 on |q1>
    CMatrix c = CMatrix::Zero(d2, d2);
    for (int a = 0; a < L; ++a) {
      const cplx ua = u(labels[a][0]);
      if (ua == 0.0) continue;
      for (Eigen::SparseMatrix<cplx, Eigen::RowMajor>::InnerIterator it(rho, a); it; ++it) {
        const auto& lb = labels[it.col()];
        c(labels[a][1], lb[1]) += ua * it.value() * std::conj(u(lb[0]));
      }
    }
    const CMatrix vc = v2 * c;
    out.values.row(i) = vc.cwiseProduct(v2.conjugate()).rowwise().sum().real().transpose();
  });
  const double edge = out.boundary_max();
  if (edge > boundary_tol) throw GridTooSmall("joint distribution boundary carries " + std::to_string(edge), edge);
  return out;
}

}  // namespace tps
