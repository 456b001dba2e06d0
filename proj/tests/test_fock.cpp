#include <gtest/gtest.h>

#include <random>

#include "tps/fock.hpp"

using namespace tps;

namespace {

CMatrix dense(const Operator& op) { return CMatrix(op); }

DensityOp random_density(int dim, std::mt19937& rng) {
  std::normal_distribution<double> g;
  CMatrix a(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) a(i, j) = cplx(g(rng), g(rng));
  CMatrix m = a * a.adjoint();
  m /= m.trace();
  return DensityOp(m);
}

}  // namespace

TEST(Annihilation, MatrixElements) {
  const CMatrix a2 = dense(annihilation(2));
  EXPECT_DOUBLE_EQ(a2(0, 1).real(), 1.0);
  const CMatrix a4 = dense(annihilation(4));
  EXPECT_NEAR(a4(2, 3).real(), 1.7320508, 1e-7);
  EXPECT_EQ(annihilation(4).nonZeros(), 3);
  const CMatrix n = dense(Operator(creation(5) * annihilation(5)));
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) EXPECT_NEAR(std::abs(n(i, j) - cplx(i == j ? i : 0.0)), 0.0, 1e-14);
}

TEST(Annihilation, RejectsTinyDimension) {
  EXPECT_THROW(annihilation(1), InvalidTruncation);
  EXPECT_THROW(annihilation(0), InvalidTruncation);
}

TEST(Annihilation, CanonicalCommutatorBelowTop) {
  for (int dim : {2, 5, 17, 40}) {
    const CMatrix a = dense(annihilation(dim));
    const CMatrix c = a * a.adjoint() - a.adjoint() * a;
    for (int i = 0; i < dim - 1; ++i)
      for (int j = 0; j < dim - 1; ++j) EXPECT_NEAR(std::abs(c(i, j) - cplx(i == j ? 1.0 : 0.0)), 0.0, 1e-13);
  }
}

TEST(Annihilation, PowerMatchesRepeatedProduct) {
  for (int k = 1; k <= 6; ++k) {
    CMatrix ref = CMatrix::Identity(20, 20);
    const CMatrix a = dense(annihilation(20));
    for (int j = 0; j < k; ++j) ref = ref * a;
    EXPECT_LT(max_abs_diff(dense(annihilation_power(k, 20)), ref), 1e-9 * ref.cwiseAbs().maxCoeff());
  }
}

TEST(CoherentState, VacuumAndMean) {
  const auto vac = coherent_state(0.0, 5);
  EXPECT_DOUBLE_EQ(std::abs(vac.amplitudes(0)), 1.0);
  EXPECT_DOUBLE_EQ(vac.amplitudes.tail(4).norm(), 0.0);

  const auto c = coherent_state(5.0, 61);
  EXPECT_NEAR(expectation(number_op(61), c).real(), 25.0, 1e-4);
}

TEST(CoherentState, TailWeightMatchesSeries) {
  // e^{-4} sum_{n>=20} 4^n / n!
  double term = std::exp(-4.0);
  for (int n = 1; n <= 20; ++n) term *= 4.0 / n;
  double tail = 0.0;
  for (int n = 20; n < 200; ++n) {
    tail += term;
    term *= 4.0 / (n + 1);
  }
  EXPECT_NEAR(coherent_tail_weight(2.0, 20), tail, 1e-12 * tail + 1e-300);
  const auto s = coherent_state(2.0, 20, 1e-7);
  EXPECT_NEAR(s.norm(), 1.0, 1e-14);
}

TEST(CoherentState, ReportsTail) {
  try {
    coherent_state(5.0, 20);
    FAIL() << "expected TruncationTooSmall";
  } catch (const TruncationTooSmall& e) {
    EXPECT_GT(e.tail_weight(), 1e-8);
    EXPECT_EQ(e.category(), Error::Category::Truncation);
  }
}

TEST(Tensor, IdentityAndCommutation) {
  const Operator id = tensor(identity_op(2), identity_op(3));
  EXPECT_LT(max_abs_diff(dense(id), CMatrix::Identity(6, 6)), 1e-15);

  const Operator a1 = tensor(annihilation(3), identity_op(4));
  const Operator a2 = tensor(identity_op(3), annihilation(4));
  EXPECT_LT(dense(Operator(a1 * a2 - a2 * a1)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Tensor, IndexConvention) {
  CVector u = CVector::Zero(3), v = CVector::Zero(4);
  u(2) = 1.0;
  v(1) = 1.0;
  const CVector w = tensor(u, v);
  EXPECT_EQ(w(2 * 4 + 1), cplx(1.0));
  EXPECT_NEAR(w.norm(), 1.0, 0.0);
}

TEST(Tensor, TraceMultiplicative) {
  std::mt19937 rng(1);
  const auto r = tensor(random_density(3, rng), random_density(5, rng));
  EXPECT_NEAR(r.trace(), 1.0, 1e-12);
}

TEST(PartialTrace, ProductStates) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int d1 = 2 + trial % 4, d2 = 3 + trial % 3;
    const auto r1 = random_density(d1, rng);
    const auto r2 = random_density(d2, rng);
    const auto r = tensor(r1, r2);
    EXPECT_LT(max_abs_diff(partial_trace(r, Subsystem::First, {d1, d2}).matrix(), r1.matrix()), 1e-12);
    EXPECT_LT(max_abs_diff(partial_trace(r, Subsystem::Second, {d1, d2}).matrix(), r2.matrix()), 1e-12);
    EXPECT_NEAR(partial_trace(r, Subsystem::First, {d1, d2}).trace(), r.trace(), 1e-12);
  }
}

TEST(PartialTrace, BellPair) {
  CVector bell = CVector::Zero(4);
  bell(0) = bell(3) = 1.0 / std::sqrt(2.0);
  const auto r = DensityOp::from_pure(bell);
  EXPECT_LT(max_abs_diff(partial_trace(r, Subsystem::First, {2, 2}).matrix(), 0.5 * CMatrix::Identity(2, 2)), 1e-15);
}

TEST(PartialTrace, ShapeMismatch) {
  EXPECT_THROW(partial_trace(DensityOp::fock(0, 6), Subsystem::First, {2, 2}), ShapeError);
}

TEST(PartialTrace, PureReductionAgreesWithFull) {
  std::mt19937 rng(3);
  std::normal_distribution<double> g;
  CVector psi(12);
  for (int i = 0; i < 12; ++i) psi(i) = cplx(g(rng), g(rng));
  psi.normalize();
  const StateVector s{psi, {3, 4}};
  const auto full = DensityOp::from_pure(psi);
  EXPECT_LT(max_abs_diff(reduce_pure(s, Subsystem::First).matrix(), partial_trace(full, Subsystem::First, {3, 4}).matrix()),
            1e-14);
  EXPECT_LT(
      max_abs_diff(reduce_pure(s, Subsystem::Second).matrix(), partial_trace(full, Subsystem::Second, {3, 4}).matrix()),
      1e-14);
}

TEST(RotateMode, IdentityAndFullTurn) {
  std::mt19937 rng(11);
  const auto r = random_density(8, rng);
  EXPECT_LT(max_abs_diff(rotate_mode(r, 0.0).matrix(), r.matrix()), 1e-15);
  EXPECT_LT(max_abs_diff(rotate_mode(r, 2 * kPi).matrix(), r.matrix()), 1e-12);
}

TEST(RotateMode, PreservesSpectrum) {
  std::mt19937 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const auto r = random_density(10, rng);
    const double phi = 0.37 * trial;
    EXPECT_LT((rotate_mode(r, phi).eigenvalues() - r.eigenvalues()).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(RotateMode, CoherentAmplitudeTurnsCounterclockwise) {
  const auto c = coherent_state(1.0, 30);
  const CVector rotated = rotate_mode(c.amplitudes, kPi / 2);
  const StateVector s{rotated, {30, 1}};
  const cplx mean_a = expectation(annihilation(30), s);
  EXPECT_NEAR(mean_a.real(), 0.0, 1e-10);
  EXPECT_NEAR(mean_a.imag(), 1.0, 1e-10);
}

TEST(Expectation, NumberOperator) {
  EXPECT_EQ(expectation(number_op(4), DensityOp::fock(0, 4)), cplx(0.0));
  const auto c = coherent_state(cplx(1.0, 0.5), 40);
  EXPECT_NEAR(expectation(number_op(40), c).real(), 1.25, 1e-10);
  EXPECT_NEAR(expectation(number_op(40), DensityOp::from_pure(c)).real(), 1.25, 1e-10);
}

TEST(Expectation, ShapeMismatch) {
  EXPECT_THROW(expectation(number_op(4), DensityOp::fock(0, 5)), ShapeError);
}

TEST(DensityOpTest, SymmetrizationIsRecorded) {
  CMatrix m = CMatrix::Zero(2, 2);
  m(0, 0) = 1.0;
  m(0, 1) = 0.2;
  const DensityOp r(m);
  EXPECT_NEAR(r.symmetrization_correction(), 0.1, 1e-15);
  EXPECT_LT(detail::hermiticity_error(r.matrix()), 1e-16);
}

TEST(DensityOpTest, ValidateRejectsBadStates) {
  CMatrix m = CMatrix::Identity(2, 2);
  EXPECT_THROW(DensityOp(m).validate(), InvalidState);
  m(1, 1) = -0.5;
  m(0, 0) = 1.5;
  EXPECT_THROW(DensityOp(m).validate(), InvalidState);
  EXPECT_NO_THROW(DensityOp::fock(1, 3).validate());
}

TEST(Fidelity, Basics) {
  std::mt19937 rng(5);
  const auto r = random_density(6, rng);
  EXPECT_NEAR(fidelity(r, r), 1.0, 1e-9);
  EXPECT_NEAR(fidelity(DensityOp::fock(0, 3), DensityOp::fock(1, 3)), 0.0, 1e-14);
}
