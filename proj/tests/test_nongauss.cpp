#include <gtest/gtest.h>

#include <boost/math/special_functions/laguerre.hpp>
#include <random>

#include "tps/dynamics.hpp"
#include "tps/nongauss.hpp"

using namespace tps;

namespace {

DensityOp thermal(double nbar, int dim) {
  CMatrix m = CMatrix::Zero(dim, dim);
  for (int n = 0; n < dim; ++n) m(n, n) = std::pow(nbar / (1 + nbar), n) / (1 + nbar);
  m /= m.trace();
  return DensityOp(m);
}

// W of |n><n| from the textbook Laguerre form.
double fock_wigner(int n, double x, double p) {
  const double r2 = x * x + p * p;
  return (n % 2 ? -1.0 : 1.0) / kPi * std::exp(-r2) * boost::math::laguerre(n, 2.0 * r2);
}

DensityOp tps_signal(double theta, double xi, double alpha, Truncation tr) {
  const auto mp = ModelParams::from_xi(1.0, theta, alpha, {xi});
  return signal_density(evolve(initial_state(alpha, tr), mp, tr), 0);
}

const Truncation kTr{60, 30};

}  // namespace

TEST(Wigner, VacuumAndOneAtOrigin) {
  EXPECT_NEAR(wigner_point(DensityOp::fock(0, 10), 0, 0), 1 / kPi, 1e-8);
  EXPECT_NEAR(wigner_point(DensityOp::fock(1, 10), 0, 0), -1 / kPi, 1e-8);
}

TEST(Wigner, FockStatesMatchLaguerreForm) {
  for (int n : {0, 1, 3, 7, 20})
    for (double x : {-2.1, 0.0, 0.4, 1.7})
      for (double p : {-0.3, 0.0, 2.2}) EXPECT_NEAR(wigner_point(DensityOp::fock(n, 30), x, p), fock_wigner(n, x, p), 1e-12);
}

TEST(Wigner, CoherentStateIsDisplacedGaussian) {
  const cplx alpha(1.2, -0.7);
  const auto rho = DensityOp::from_pure(coherent_state(alpha, 40));
  const double x0 = std::sqrt(2.0) * alpha.real(), p0 = std::sqrt(2.0) * alpha.imag();
  for (double x : {-1.0, 0.5, 1.8})
    for (double p : {-1.5, -0.9, 0.3}) {
      const double expect = std::exp(-(x - x0) * (x - x0) - (p - p0) * (p - p0)) / kPi;
      EXPECT_NEAR(wigner_point(rho, x, p), expect, 1e-10);
    }
}

TEST(Wigner, LargeDimensionStaysFinite) {
  const auto rho = DensityOp::from_pure(coherent_state(5.0, 160));
  const double w = wigner_point(rho, std::sqrt(2.0) * 5.0, 0.0);
  EXPECT_NEAR(w, 1 / kPi, 1e-8);
}

TEST(Wigner, GridNormalization) {
  for (const auto& rho : {DensityOp::fock(0, 5), DensityOp::fock(3, 5), tps_signal(0.0, 0.5, 3.0, kTr)}) {
    const auto g = wigner_auto(rho);
    EXPECT_NEAR(g.normalization(), 1.0, 2e-3);
    EXPECT_LE(g.boundary_max(), 1e-6);
  }
}

TEST(Wigner, GridTooSmallReportsBoundary) {
  try {
    wigner(DensityOp::fock(0, 3), GridSpec{-1, 1, -1, 1, 21, 21});
    FAIL() << "expected GridTooSmall";
  } catch (const GridTooSmall& e) {
    EXPECT_GT(e.boundary_value(), 1e-6);
  }
}

TEST(Wigner, ThreefoldSymmetryOfEvolvedState) {
  const auto rho = tps_signal(0.0, 0.5, 3.0, kTr);
  const auto g = wigner_auto(rho, GridSpec{-5, 5, -5, 5, 61, 61});
  EXPECT_LE(symmetry_residual(rho, g), 1e-4);
  EXPECT_GT(rotation_residual(rho, g, kPi / 3), 1e-2);
}

TEST(Wigner, RotationCovariance) {
  const auto rho = tps_signal(0.4, 0.3, 3.0, kTr);
  for (double phi : {0.3, 1.1, 2.9}) {
    const auto rr = rotate_mode(rho, phi);
    const double c = std::cos(phi), s = std::sin(phi);
    for (double x : {-1.3, 0.2, 1.6})
      for (double p : {-0.8, 0.0, 1.1}) {
        // W'(R x) = W(x)
        EXPECT_NEAR(wigner_point(rr, c * x - s * p, s * x + c * p), wigner_point(rho, x, p), 1e-10);
      }
  }
}

TEST(Wigner, MarginalMatchesHomodyne) {
  for (const auto& rho : {DensityOp::fock(0, 6), DensityOp::fock(3, 6), tps_signal(0.0, 0.4, 3.0, kTr)}) {
    const auto g = wigner_auto(rho);
    const QuadratureAxis axis{g.spec.x_min, g.spec.x_max, g.spec.n_x};
    const auto h = homodyne(rho, 0.0, axis);
    const RVector marginal = g.values.rowwise().sum() * g.spec.dp();
    EXPECT_LE((marginal - h.values).cwiseAbs().maxCoeff(), 1e-4);
  }
}

TEST(Negativity, VacuumAndFockOne) {
  EXPECT_NEAR(wigner_negativity(wigner_auto(DensityOp::fock(0, 4))).value, 0.0, 1e-6);

  // radial oracle: integral over r < 1/sqrt(2) of |W_1| 2 pi r dr, Simpson rule
  const int n = 2000;
  const double b = 1.0 / std::sqrt(2.0), h = b / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double r = i * h;
    const double f = -fock_wigner(1, r, 0.0) * 2 * kPi * r;
    s += f * (i == 0 || i == n ? 1 : (i % 2 ? 4 : 2));
  }
  const double oracle = s * h / 3;
  EXPECT_NEAR(oracle, 2 * std::exp(-0.5) - 1, 1e-9);
  const auto neg = wigner_negativity(wigner_auto(DensityOp::fock(1, 4)));
  EXPECT_NEAR(neg.value, oracle, 1e-4);
  EXPECT_LT(neg.error_estimate, 1e-3);
}

TEST(Entropy, Basics) {
  EXPECT_NEAR(von_neumann_entropy(DensityOp::fock(2, 5)), 0.0, 1e-9);
  EXPECT_NEAR(von_neumann_entropy(DensityOp(0.5 * CMatrix::Identity(2, 2))), std::log(2.0), 1e-12);
  EXPECT_NEAR(von_neumann_entropy(thermal(1.0, 40)), 2 * std::log(2.0), 1e-9);
  CMatrix bad = CMatrix::Zero(2, 2);
  bad(0, 0) = 1.1;
  bad(1, 1) = -0.1;
  EXPECT_THROW(von_neumann_entropy(DensityOp(bad)), InvalidState);
}

TEST(GaussianEntropy, Values) {
  EXPECT_DOUBLE_EQ(gaussian_entropy(0.5), 0.0);
  EXPECT_NEAR(gaussian_entropy(1.5), 2 * std::log(2.0), 1e-12);
  EXPECT_NEAR(gaussian_entropy(1.0), 1.5 * std::log(1.5) - 0.5 * std::log(0.5), 1e-12);
  EXPECT_NEAR(gaussian_entropy(1.0), 0.9548, 1e-4);
  EXPECT_THROW(gaussian_entropy(0.4), UnphysicalCovariance);
  double prev = -1.0;
  for (double nu = 0.5; nu < 10; nu += 0.05) {
    const double s = gaussian_entropy(nu);
    EXPECT_GT(s, prev);
    prev = s;
  }
}

TEST(GaussianReference, VacuumAndCoherent) {
  const auto v = gaussian_reference(DensityOp::fock(0, 6));
  EXPECT_LT((v.cm - 0.5 * Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(v.nu, 0.5, 1e-14);
  const cplx alpha(0.8, -0.3);
  const auto c = gaussian_reference(DensityOp::from_pure(coherent_state(alpha, 40)));
  EXPECT_LT((c.cm - 0.5 * Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(c.mean(0), std::sqrt(2.0) * alpha.real(), 1e-10);
  EXPECT_NEAR(c.mean(1), std::sqrt(2.0) * alpha.imag(), 1e-10);
}

TEST(NonGaussianity, GaussianStatesGiveZero) {
  EXPECT_NEAR(relative_entropy_nongaussianity(DensityOp::fock(0, 6)), 0.0, 1e-9);
  EXPECT_NEAR(relative_entropy_nongaussianity(thermal(0.7, 60)), 0.0, 2e-6);
  EXPECT_NEAR(relative_entropy_nongaussianity(thermal(1.0, 60)), 0.0, 2e-6);
}

TEST(NonGaussianity, EvolvedStateIsNonGaussianAndMixed) {
  const auto rho = tps_signal(0.0, 0.5, 3.0, kTr);
  const auto ref = gaussian_reference(rho);
  EXPECT_GT(ref.nu, 0.5);
  EXPECT_GT(relative_entropy_nongaussianity(rho), 0.1);
}

TEST(NonGaussianity, RotationInvariance) {
  const auto rho = tps_signal(0.0, 0.4, 3.0, kTr);
  const double d0 = relative_entropy_nongaussianity(rho);
  const GridSpec spec = wigner_auto(rho).spec;
  const double n0 = wigner_negativity(wigner(rho, spec)).value;
  for (double phi : {0.2, kPi / 6, 1.0, 2.5}) {
    const auto rr = rotate_mode(rho, phi);
    EXPECT_NEAR(relative_entropy_nongaussianity(rr), d0, 1e-6);
    EXPECT_NEAR(wigner_negativity(wigner(rr, spec)).value, n0, 1e-4);
  }
}

TEST(Homodyne, VacuumJointIsProductGaussian) {
  const auto s = LabeledState::product(DensityOp::fock(0, 9), {3, 3});
  const QuadratureAxis ax{-5, 5, 101};
  const auto j = homodyne_joint(s, 0.0, kPi / 2, ax, ax);
  EXPECT_NEAR(j.normalization(), 1.0, 2e-3);
  for (int a = 0; a < ax.n; a += 10)
    for (int b = 0; b < ax.n; b += 10) {
      const double q1 = ax.at(a), q2 = ax.at(b);
      EXPECT_NEAR(j.values(a, b), std::exp(-q1 * q1 - q2 * q2) / kPi, 1e-12);
    }
}

TEST(Homodyne, MarginalMatchesSingleMode) {
  std::mt19937 rng(3);
  std::normal_distribution<double> g;
  const ProductDims dims{5, 4};
  CVector psi(dims.size());
  for (int i = 0; i < dims.size(); ++i) psi(i) = cplx(g(rng), g(rng));
  psi.normalize();
  const auto rho = DensityOp::from_pure(psi);
  const auto s = LabeledState::product(rho, dims);
  const QuadratureAxis ax{-7, 7, 281};
  for (double phi1 : {0.0, kPi / 2}) {
    const auto j = homodyne_joint(s, phi1, 0.7, ax, ax);
    const auto single = homodyne(partial_trace(rho, Subsystem::First, dims), phi1, ax);
    EXPECT_LE((j.marginal_first() - single.values).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_NEAR(j.normalization(), 1.0, 2e-3);
  }
}

TEST(Homodyne, GridTooSmall) {
  const auto s = LabeledState::product(DensityOp::fock(0, 9), {3, 3});
  EXPECT_THROW(homodyne_joint(s, 0, 0, {-1, 1, 11}, {-1, 1, 11}), GridTooSmall);
}

TEST(Homodyne, EvaluatorMatchesDirectForm) {
  const auto sig = tps_signal(0.4, 0.3, 3.0, {30, 40});
  const auto mixed = DensityOp(0.5 * thermal(0.8, sig.dim()).matrix() + 0.5 * sig.matrix());
  const QuadratureAxis ax{-6, 6, 61};
  for (double phi : {0.0, 0.9, kPi / 2}) {
    const auto direct = homodyne(mixed, phi, ax);
    const HomodyneEvaluator ev(mixed, phi);
    for (int i = 0; i < ax.n; ++i) EXPECT_NEAR(ev(ax.at(i)), direct.values(i), 1e-12);
  }
}
