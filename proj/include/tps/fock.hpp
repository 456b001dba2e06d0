#pragma once

// Truncated Fock-space linear algebra: ladder operators, coherent states,
// tensor products, partial traces, phase rotations and expectation values.
//
// Product-basis convention (used everywhere in the library): for a composite
// of subsystems with dimensions (d_first, d_second) the basis vector
// |i>|j> sits at index i * d_second + j, i.e. the first factor is the major
// index. For the signal/pump pair this is idx = n_a * (n_pump + 1) + n_p.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <complex>
#include <cstddef>
#include <sstream>
#include <utility>
#include <vector>

#include "tps/error.hpp"

namespace tps {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;
/// Sparse operator on a truncated Fock space (column-major CSC).
using Operator = Eigen::SparseMatrix<cplx>;

inline constexpr cplx I{0.0, 1.0};
inline constexpr double kPi = 3.14159265358979323846;

/// Fock-space cutoffs. Basis of each mode is 0..n inclusive.
struct Truncation {
  int n_signal = 24;
  int n_pump = 0;

  int signal_dim() const { return n_signal + 1; }
  int pump_dim() const { return n_pump + 1; }
  int product_dim() const { return signal_dim() * pump_dim(); }

  /// Signal-major product index.
  int index(int n_a, int n_p) const { return n_a * pump_dim() + n_p; }
  std::pair<int, int> split(int idx) const { return {idx / pump_dim(), idx % pump_dim()}; }

  void validate() const {
    if (n_signal < 3) throw InvalidTruncation("n_signal must be >= 3, got " + std::to_string(n_signal));
    if (n_pump < 1) throw InvalidTruncation("n_pump must be >= 1, got " + std::to_string(n_pump));
  }

  bool operator==(const Truncation&) const = default;
};

/// Pump cutoff: ceil(|alpha|^2 + 6 |alpha|), raised further when needed so the
/// coherent-state tail stays below 1e-8 (six standard deviations alone do not
/// guarantee that for |alpha| <= 5).
inline int default_pump_cutoff(double alpha_p) {
  const double a = std::abs(alpha_p);
  int n = std::max(1, static_cast<int>(std::ceil(a * a + 6.0 * a)));
  if (a == 0.0) return n;
  while (boost::math::gamma_p(static_cast<double>(n + 1), a * a) > 1e-8) ++n;
  return n;
}

inline Truncation default_truncation(double alpha_p, int n_signal = 24) {
  return Truncation{n_signal, default_pump_cutoff(alpha_p)};
}

/// Dimensions of a two-factor product space.
struct ProductDims {
  int first = 1;
  int second = 1;

  int size() const { return first * second; }
  int index(int i, int j) const { return i * second + j; }
  std::pair<int, int> split(int idx) const { return {idx / second, idx % second}; }
  bool operator==(const ProductDims&) const = default;
};

/// Pure state over a (possibly single-factor) product basis.
struct StateVector {
  CVector amplitudes;
  ProductDims dims;  // dims.second == 1 for a single mode

  int dim() const { return static_cast<int>(amplitudes.size()); }
  double norm() const { return amplitudes.norm(); }
  std::pair<int, int> label(int idx) const { return dims.split(idx); }
};

namespace detail {

inline double hermiticity_error(const CMatrix& m) {
  return (m - m.adjoint()).cwiseAbs().maxCoeff();
}

inline CMatrix embed(const CMatrix& m, int dim) {
  CMatrix out = CMatrix::Zero(dim, dim);
  const int n = std::min<int>(dim, static_cast<int>(m.rows()));
  out.topLeftCorner(n, n) = m.topLeftCorner(n, n);
  return out;
}

}  // namespace detail

/// Hermitian, unit-trace, positive semidefinite density matrix.
///
/// Construction symmetrizes the input (rho <- (rho + rho^dagger) / 2) and
/// records the size of the correction so pipelines can report it.
class DensityOp {
public:
  DensityOp() = default;

  explicit DensityOp(CMatrix m) {
    if (m.rows() != m.cols()) throw ShapeError("density matrix must be square");
    const CMatrix sym = 0.5 * (m + m.adjoint());
    correction_ = m.size() > 0 ? (sym - m).cwiseAbs().maxCoeff() : 0.0;
    m_ = sym;
  }

  static DensityOp from_pure(const CVector& psi) { return DensityOp(psi * psi.adjoint()); }
  static DensityOp from_pure(const StateVector& psi) { return from_pure(psi.amplitudes); }

  /// |n><n| in a space of dimension dim.
  static DensityOp fock(int n, int dim) {
    CMatrix m = CMatrix::Zero(dim, dim);
    m(n, n) = 1.0;
    return DensityOp(std::move(m));
  }

  int dim() const { return static_cast<int>(m_.rows()); }
  const CMatrix& matrix() const { return m_; }
  cplx operator()(int i, int j) const { return m_(i, j); }

  double trace() const { return m_.trace().real(); }
  double purity() const { return (m_ * m_).trace().real(); }
  double symmetrization_correction() const { return correction_; }

  RVector populations() const { return m_.diagonal().real(); }

  RVector eigenvalues() const {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(m_, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
  }

  /// Zero-padded copy living in a larger space (operators of total ladder
  /// order m act exactly on the padded state when dim >= this->dim() + m).
  DensityOp padded(int dim) const { return DensityOp(detail::embed(m_, dim)); }

  /// Throws InvalidState unless Hermitian (1e-10), unit trace (1e-9) and
  /// smallest eigenvalue >= -1e-9.
  void validate(double herm_tol = 1e-10, double trace_tol = 1e-9, double eig_tol = 1e-9) const {
    const double herm = detail::hermiticity_error(m_);
    if (herm > herm_tol) throw InvalidState("density matrix not Hermitian: " + std::to_string(herm));
    if (std::abs(trace() - 1.0) > trace_tol)
      throw InvalidState("density matrix trace deviates from 1: " + std::to_string(trace()));
    const double lo = eigenvalues().minCoeff();
    if (lo < -eig_tol) throw InvalidState("density matrix has negative eigenvalue " + std::to_string(lo));
  }

private:
  CMatrix m_;
  double correction_ = 0.0;
};

// ---------------------------------------------------------------------------
// Ladder operators

inline Operator annihilation(int dim) {
  if (dim < 2) throw InvalidTruncation("annihilation operator needs dim >= 2, got " + std::to_string(dim));
  std::vector<Eigen::Triplet<cplx>> t;
  t.reserve(dim - 1);
  for (int n = 1; n < dim; ++n) t.emplace_back(n - 1, n, std::sqrt(static_cast<double>(n)));
  Operator a(dim, dim);
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

inline Operator creation(int dim) { return Operator(annihilation(dim).adjoint()); }

inline Operator number_op(int dim) {
  std::vector<Eigen::Triplet<cplx>> t;
  for (int n = 1; n < dim; ++n) t.emplace_back(n, n, static_cast<double>(n));
  Operator op(dim, dim);
  op.setFromTriplets(t.begin(), t.end());
  return op;
}

inline Operator identity_op(int dim) {
  Operator id(dim, dim);
  id.setIdentity();
  return id;
}

/// a^k with exact matrix elements <n-k|a^k|n> = sqrt(n!/(n-k)!).
inline Operator annihilation_power(int k, int dim) {
  std::vector<Eigen::Triplet<cplx>> t;
  for (int n = k; n < dim; ++n) {
    double v = 1.0;
    for (int j = n - k + 1; j <= n; ++j) v *= std::sqrt(static_cast<double>(j));
    t.emplace_back(n - k, n, v);
  }
  Operator op(dim, dim);
  op.setFromTriplets(t.begin(), t.end());
  return op;
}

// ---------------------------------------------------------------------------
// Coherent states

/// Poisson tail sum_{n >= dim} e^{-|alpha|^2} |alpha|^{2n} / n!.
inline double coherent_tail_weight(cplx alpha, int dim) {
  const double mean = std::norm(alpha);
  if (mean == 0.0) return 0.0;
  // P(N >= dim) for N ~ Poisson(mean) is the regularized lower gamma P(dim, mean).
  return boost::math::gamma_p(static_cast<double>(dim), mean);
}

/// Truncated coherent state renormalized to unit norm. Throws
/// TruncationTooSmall when the discarded tail exceeds tail_tolerance.
inline StateVector coherent_state(cplx alpha, int dim, double tail_tolerance = 1e-8) {
  if (dim < 1) throw InvalidTruncation("coherent state needs dim >= 1");
  const double tail = coherent_tail_weight(alpha, dim);
  if (tail > tail_tolerance) {
    std::ostringstream os;
    os << "coherent state |" << alpha << "> truncated at dim " << dim << " loses weight " << tail;
    throw TruncationTooSmall(os.str(), tail);
  }
  CVector c(dim);
  c(0) = 1.0;
  for (int n = 1; n < dim; ++n) c(n) = c(n - 1) * alpha / std::sqrt(static_cast<double>(n));
  c /= c.norm();
  return StateVector{std::move(c), ProductDims{dim, 1}};
}

// ---------------------------------------------------------------------------
// Composition

inline Operator tensor(const Operator& a, const Operator& b) {
  std::vector<Eigen::Triplet<cplx>> t;
  t.reserve(static_cast<std::size_t>(a.nonZeros() * b.nonZeros()));
  const auto rb = b.rows(), cb = b.cols();
  for (int ka = 0; ka < a.outerSize(); ++ka)
    for (Operator::InnerIterator ia(a, ka); ia; ++ia)
      for (int kb = 0; kb < b.outerSize(); ++kb)
        for (Operator::InnerIterator ib(b, kb); ib; ++ib)
          t.emplace_back(static_cast<int>(ia.row() * rb + ib.row()), static_cast<int>(ia.col() * cb + ib.col()),
                         ia.value() * ib.value());
  Operator out(a.rows() * rb, a.cols() * cb);
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

inline CMatrix tensor(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline DensityOp tensor(const DensityOp& a, const DensityOp& b) { return DensityOp(tensor(a.matrix(), b.matrix())); }

inline CVector tensor(const CVector& a, const CVector& b) {
  CVector out(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) out.segment(i * b.size(), b.size()) = a(i) * b;
  return out;
}

enum class Subsystem { First, Second };

/// Partial trace of a two-factor density matrix; `keep` selects the factor
/// that survives.
inline DensityOp partial_trace(const DensityOp& rho, Subsystem keep, ProductDims dims) {
  if (rho.dim() != dims.size()) {
    std::ostringstream os;
    os << "partial_trace: rho has dim " << rho.dim() << " but dims are " << dims.first << "x" << dims.second;
    throw ShapeError(os.str());
  }
  const CMatrix& m = rho.matrix();
  if (keep == Subsystem::First) {
    CMatrix out = CMatrix::Zero(dims.first, dims.first);
    for (int i = 0; i < dims.first; ++i)
      for (int j = 0; j < dims.first; ++j) {
        cplx s = 0.0;
        for (int k = 0; k < dims.second; ++k) s += m(dims.index(i, k), dims.index(j, k));
        out(i, j) = s;
      }
    return DensityOp(std::move(out));
  }
  CMatrix out = CMatrix::Zero(dims.second, dims.second);
  for (int i = 0; i < dims.second; ++i)
    for (int j = 0; j < dims.second; ++j) {
      cplx s = 0.0;
      for (int k = 0; k < dims.first; ++k) s += m(dims.index(k, i), dims.index(k, j));
      out(i, j) = s;
    }
  return DensityOp(std::move(out));
}

/// Reduced state of one factor of a pure product-basis vector, built without
/// forming the full density matrix.
inline DensityOp reduce_pure(const StateVector& psi, Subsystem keep) {
  const auto& d = psi.dims;
  Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> c(
      psi.amplitudes.data(), d.first, d.second);
  if (keep == Subsystem::First) return DensityOp(c * c.adjoint());
  return DensityOp((c.transpose() * c.conjugate()).eval());
}

/// R rho R^dagger with R = diag(e^{i n phi}); the Wigner function rotates
/// rigidly counterclockwise by phi.
inline DensityOp rotate_mode(const DensityOp& rho, double phi) {
  const int d = rho.dim();
  CVector phase(d);
  for (int n = 0; n < d; ++n) phase(n) = std::polar(1.0, n * phi);
  CMatrix m = phase.asDiagonal() * rho.matrix() * phase.conjugate().asDiagonal();
  return DensityOp(std::move(m));
}

inline CVector rotate_mode(const CVector& psi, double phi) {
  CVector out(psi.size());
  for (Eigen::Index n = 0; n < psi.size(); ++n) out(n) = psi(n) * std::polar(1.0, n * phi);
  return out;
}

// ---------------------------------------------------------------------------
// Expectation values

inline cplx expectation(const Operator& op, const StateVector& psi) {
  if (op.rows() != psi.dim() || op.cols() != psi.dim())
    throw ShapeError("expectation: operator dim " + std::to_string(op.rows()) + " vs state dim " +
                     std::to_string(psi.dim()));
  return psi.amplitudes.dot(op * psi.amplitudes);
}

/// tr(O rho).
inline cplx expectation(const Operator& op, const DensityOp& rho) {
  if (op.rows() != rho.dim() || op.cols() != rho.dim())
    throw ShapeError("expectation: operator dim " + std::to_string(op.rows()) + " vs state dim " +
                     std::to_string(rho.dim()));
  const CMatrix& m = rho.matrix();
  cplx s = 0.0;
  for (int k = 0; k < op.outerSize(); ++k)
    for (Operator::InnerIterator it(op, k); it; ++it) s += it.value() * m(it.col(), it.row());
  return s;
}

inline cplx expectation(const CMatrix& op, const DensityOp& rho) {
  if (op.rows() != rho.dim()) throw ShapeError("expectation: dimension mismatch");
  return (op.cwiseProduct(rho.matrix().transpose())).sum();
}

// ---------------------------------------------------------------------------
// Comparisons

/// Uhlmann fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.
inline double fidelity(const DensityOp& rho, const DensityOp& sigma) {
  if (rho.dim() != sigma.dim()) throw ShapeError("fidelity: dimension mismatch");
  Eigen::SelfAdjointEigenSolver<CMatrix> es(rho.matrix());
  const RVector ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const CMatrix sqrt_rho = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
  const CMatrix inner = sqrt_rho * sigma.matrix() * sqrt_rho;
  Eigen::SelfAdjointEigenSolver<CMatrix> es2(0.5 * (inner + inner.adjoint()), Eigen::EigenvaluesOnly);
  const double root = es2.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return root * root;
}

inline double max_abs_diff(const CMatrix& a, const CMatrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace tps
