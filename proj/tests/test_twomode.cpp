#include <gtest/gtest.h>

#include <random>

#include "tps/twomode.hpp"

using namespace tps;

namespace {

DensityOp coherent(cplx alpha, int dim) { return DensityOp::from_pure(coherent_state(alpha, dim)); }

DensityOp tps_signal(double theta, double xi, double alpha, Truncation tr) {
  return prepare_tps(theta, 1.0, alpha, xi / alpha, tr);
}

DensityOp random_pure(int dim, std::mt19937& rng) {
  std::normal_distribution<double> g;
  CVector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = cplx(g(rng), g(rng));
  v.normalize();
  return DensityOp::from_pure(v);
}

// Dense x^(n) on a (d0 x d1) product space expressed through input modes:
// a_1 = sqrt(T) a_0 + sqrt(R) a_pi, a_2 = sqrt(R) a_0 - sqrt(T) a_pi.
CMatrix output_quadrature(int mode, int order, char axis, double t, int d0, int d1) {
  const CMatrix a0 = tensor(CMatrix(annihilation(d0)), CMatrix::Identity(d1, d1));
  const CMatrix api = tensor(CMatrix::Identity(d0, d0), CMatrix(annihilation(d1)));
  const double st = std::sqrt(t), sr = std::sqrt(1 - t);
  const CMatrix a = mode == 1 ? CMatrix(st * a0 + sr * api) : CMatrix(sr * a0 - st * api);
  CMatrix ak = CMatrix::Identity(a.rows(), a.cols());
  for (int i = 0; i < order; ++i) ak = ak * a;
  if (axis == 'x') return 0.5 * (ak + ak.adjoint());
  return 0.5 * I * (ak.adjoint() - ak);
}

}  // namespace

TEST(BeamSplitter, BlocksAreOrthogonal) {
  for (int n : {0, 1, 5, 30, 60}) {
    const RMatrix u = detail::beam_splitter_block(n, 0.6);
    EXPECT_LT((u * u.transpose() - RMatrix::Identity(n + 1, n + 1)).cwiseAbs().maxCoeff(), 1e-11) << n;
  }
  EXPECT_NEAR(std::abs(BeamSplitterSpec{}.mixing_matrix().determinant()), 1.0, 1e-15);
}

TEST(BeamSplitter, CoherentInputsFollowModeMap) {
  const double t = 0.6;
  const cplx alpha(1.1, 0.4);
  const int d = 30;
  const auto vac = DensityOp::fock(0, d);
  for (int which = 0; which < 2; ++which) {
    const auto s = which == 0 ? beam_split(coherent(alpha, d), vac) : beam_split(vac, coherent(alpha, d));
    const cplx m1 = moment(s.state, "a_1").value, m2 = moment(s.state, "a_2").value;
    const cplx e1 = which == 0 ? std::sqrt(t) * alpha : std::sqrt(1 - t) * alpha;
    const cplx e2 = which == 0 ? std::sqrt(1 - t) * alpha : -std::sqrt(t) * alpha;
    EXPECT_LT(std::abs(m1 - e1), 1e-9);
    EXPECT_LT(std::abs(m2 - e2), 1e-9);
  }
}

TEST(BeamSplitter, HeisenbergPictureOracle) {
  std::mt19937 rng(8);
  const int d0 = 5, d1 = 4;
  const auto r0 = random_pure(d0, rng), r1 = random_pure(d1, rng);
  // padded so the oracle's truncated ladder operators act exactly on the state
  const int p0 = d0 + 8, p1 = d1 + 8;
  const CMatrix rin = tensor(detail::embed(r0.matrix(), p0), detail::embed(r1.matrix(), p1));
  const auto s = beam_split(r0, r1, {0.6}, {.n_total_max = d0 + d1 - 2});
  for (int n = 1; n <= 3; ++n)
    for (int k = 1; k <= 3; ++k)
      for (char ax1 : {'x', 'y'})
        for (char ax2 : {'x', 'y'}) {
          const CMatrix op = output_quadrature(1, n, ax1, 0.6, p0, p1) * output_quadrature(2, k, ax2, 0.6, p0, p1);
          const cplx expect = (op * rin).trace();
          EXPECT_NEAR(std::abs(cross_moment(s, n, k, ax1, ax2).value - expect), 0.0, 1e-10) << n << k << ax1 << ax2;
        }
}

TEST(BeamSplitter, VacuumStaysVacuum) {
  const auto s = beam_split(DensityOp::fock(0, 4), DensityOp::fock(0, 4));
  EXPECT_EQ(s.state.size(), 1);
  EXPECT_NEAR(s.rho()(0, 0).real(), 1.0, 1e-15);
}

TEST(BeamSplitter, FullTransmissionIsProductUpToReflectedSign) {
  const Truncation tr{30, 30};
  const auto r0 = tps_signal(0.0, 0.2, 3.0, tr), rp = tps_signal(kPi, 0.2, 3.0, tr);
  const auto out = beam_split(r0, rp, {1.0});
  const auto control = beam_split(r0, rotate_mode(rp, kPi), {1.0}, {.apply = false});
  ASSERT_EQ(out.state.size(), control.state.size());
  EXPECT_GE(fidelity(out.rho(), control.rho()), 1 - 1e-10);
}

TEST(BeamSplitter, PreservesTotalNumberMoments) {
  const Truncation tr{30, 30};
  const auto r0 = tps_signal(0.0, 0.3, 3.0, tr), rp = tps_signal(kPi, 0.3, 3.0, tr);
  const auto before = beam_split(r0, rp, {0.6}, {.apply = false});
  const auto after = beam_split(r0, rp, {0.6});
  const std::vector<std::string> specs{"n_1", "n_2", "n_1 n_1", "n_1 n_2", "n_2 n_2", "n_1^3", "n_1^2 n_2",
                                       "n_1 n_2^2", "n_2^3"};
  // <(N1+N2)^m> for m = 1, 2, 3
  auto powers = [&](const TwoModeState& s) {
    std::vector<double> v;
    for (const auto& sp : specs) v.push_back(moment(s.state, sp).value.real());
    return std::array<double, 3>{v[0] + v[1], v[2] + 2 * v[3] + v[4], v[5] + 3 * v[6] + 3 * v[7] + v[8]};
  };
  const auto pb = powers(before), pa = powers(after);
  for (int m = 0; m < 3; ++m) EXPECT_NEAR(pa[m], pb[m], 1e-9 * std::max(1.0, pb[m]));
}

TEST(BeamSplitter, PureInputsGivePureOutput) {
  std::mt19937 rng(5);
  const auto s = beam_split(random_pure(7, rng), random_pure(6, rng), {0.6}, {.n_total_max = 11});
  EXPECT_NEAR(s.rho().purity(), 1.0, 1e-8);
}

TEST(BeamSplitter, GuardOnTooSmallCutoff) {
  const Truncation tr{30, 30};
  const auto r0 = tps_signal(0.0, 0.4, 3.0, tr);
  EXPECT_THROW(beam_split(r0, r0, {0.6}, {.n_total_max = 3}), GuardViolation);
  EXPECT_THROW(beam_split(r0, r0, {1.5}), ConfigError);
}

TEST(CrossMoment, SelectionRule) {
  const Truncation tr{45, 30};
  const auto s = beam_split(tps_signal(0.0, 0.3, 3.0, tr), tps_signal(kPi, 0.3, 3.0, tr));
  const auto rows = selection_rule_audit(s, 4);
  bool some_allowed_large = false;
  for (const auto& r : rows) {
    EXPECT_TRUE(r.pass) << r.n << "," << r.k << " " << r.magnitude;
    if (r.allowed && r.magnitude > 1e-4) some_allowed_large = true;
  }
  EXPECT_TRUE(some_allowed_large);
  EXPECT_LE(std::abs(cross_moment(s, 1, 3).value), 1e-9);
  EXPECT_GT(std::abs(cross_moment(s, 1, 2).value), 1e-4);
  EXPECT_LE(std::abs(cross_moment(s, 2, 2).value.imag()), 1e-10);
  EXPECT_TRUE(selection_rule_allows(4, 1));
  EXPECT_FALSE(selection_rule_allows(1, 3));
}

TEST(PPT, InvariantUnderLocalPhases) {
  const Truncation tr{45, 30};
  const auto r0 = tps_signal(0.0, 0.3, 3.0, tr), rp = tps_signal(kPi, 0.3, 3.0, tr);
  const auto base = beam_split(r0, rp);
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(0, 2 * kPi);
  for (int trial = 0; trial < 3; ++trial) {
    const double p1 = u(rng), p2 = u(rng);
    // local rotations applied on the output labels
    CMatrix m = base.rho().matrix();
    const auto& labels = base.state.labels();
    for (int a = 0; a < base.state.size(); ++a)
      for (int b = 0; b < base.state.size(); ++b)
        m(a, b) *= std::polar(1.0, p1 * (labels[a][0] - labels[b][0]) + p2 * (labels[a][1] - labels[b][1]));
    const LabeledState rotated(labels, DensityOp(m), 2);
    for (const auto& [k, l] : std::vector<std::pair<int, int>>{{2, 1}, {1, 2}, {3, 3}})
      EXPECT_NEAR(ppt_test(higher_cm(rotated, k, l)).nu_tilde_minus, ppt_test(higher_cm(base.state, k, l)).nu_tilde_minus,
                  1e-9);
  }
}

TEST(Scan, SeparableControlIsSound) {
  ScanConfig cfg;
  cfg.alpha_p = 3.0;
  cfg.times = {0.1, 0.3, 0.5};
  cfg.heisenberg = false;
  cfg.split_options.apply = false;
  auto check = [](const EntanglementScan& scan) {
    ASSERT_EQ(scan.points.size(), 3u);
    for (const auto& p : scan.points)
      for (const auto& r : p.results) {
        EXPECT_GE(r.nu_tilde_minus, -1e-8);
        EXPECT_EQ(r.verdict(), "inconclusive");
      }
    EXPECT_NEAR(scan.points[1].xi0, 0.1 * 3.0 * 0.3, 1e-15);
  };
  check(entanglement_scan(cfg));
  // full transmission leaves the product untouched (up to a local sign)
  cfg.heisenberg = true;
  cfg.splitter.transmittance = 1.0;
  check(entanglement_scan(cfg));
}

TEST(MixedMoments, AgreeWithMixedState) {
  const Truncation tr{45, 30};
  const auto r0 = tps_signal(0.0, 0.3, 3.0, tr), rp = tps_signal(kPi, 0.3, 3.0, tr);
  const auto s = beam_split(r0, rp);
  const MixedMoments m(r0, rp);
  for (const char* spec : {"a_1", "ad_2 a_1", "x(3)_1 x(2)_2", "y(2)_1^2", "n_1 n_2", "f(3)_2", "x(2)_1 y(3)_2 x(1)_1"}) {
    const cplx a = m(spec).value, b = moment(s.state, spec).value;
    EXPECT_LT(std::abs(a - b), 1e-9 * std::max(1.0, std::abs(b))) << spec;
  }
  for (const auto& [k, l] : std::vector<std::pair<int, int>>{{2, 1}, {1, 2}, {3, 3}, {4, 2}}) {
    const auto h = higher_cm(m, k, l), d = higher_cm(s.state, k, l);
    EXPECT_LT((h.V - d.V).cwiseAbs().maxCoeff(), 1e-8 * std::max(1.0, d.V.cwiseAbs().maxCoeff())) << k << l;
    EXPECT_NEAR(ppt_test(h).nu_tilde_minus, ppt_test(d).nu_tilde_minus, 1e-8);
  }
}

TEST(MixedMoments, HeisenbergOracleOnRandomInputs) {
  std::mt19937 rng(4);
  const int d0 = 5, d1 = 4;
  const auto r0 = random_pure(d0, rng), r1 = random_pure(d1, rng);
  const int p0 = d0 + 8, p1 = d1 + 8;
  const CMatrix rin = tensor(detail::embed(r0.matrix(), p0), detail::embed(r1.matrix(), p1));
  const MixedMoments m(r0, r1, {0.35});
  for (int n = 1; n <= 3; ++n)
    for (int k = 1; k <= 3; ++k) {
      const CMatrix op = output_quadrature(1, n, 'x', 0.35, p0, p1) * output_quadrature(2, k, 'y', 0.35, p0, p1);
      const cplx expect = (op * rin).trace();
      const cplx got = m(concat(quadrature_factor('x', n, 0), quadrature_factor('y', k, 1))).value;
      EXPECT_LT(std::abs(got - expect), 1e-10) << n << k;
    }
}

TEST(Scan, HeisenbergMatchesStateBasedScan) {
  ScanConfig cfg;
  cfg.alpha_p = 3.0;
  cfg.times = {0.15, 0.3};
  cfg.pairs = {{2, 1}, {1, 2}, {3, 3}};
  const auto a = entanglement_scan(cfg);
  cfg.heisenberg = false;
  cfg.split_options.tail_tolerance = 0.0;  // keep every total-number block
  const auto b = entanglement_scan(cfg);
  for (std::size_t i = 0; i < a.points.size(); ++i)
    for (std::size_t j = 0; j < cfg.pairs.size(); ++j)
      EXPECT_NEAR(a.points[i].results[j].nu_tilde_minus, b.points[i].results[j].nu_tilde_minus, 1e-9);
}

TEST(Scan, MixedStatesShowEntanglement) {
  ScanConfig cfg;
  cfg.alpha_p = 3.0;
  cfg.times = {0.1, 0.2};
  cfg.pairs = {{2, 1}, {1, 2}};
  const auto scan = entanglement_scan(cfg);
  const auto s21 = scan.series(2, 1);
  EXPECT_LT(*std::min_element(s21.begin(), s21.end()), -1e-7);
  EXPECT_THROW(scan.series(4, 4), IndexOutOfRange);
}

TEST(JointHomodyne, InputFactorizationMatchesOutputState) {
  std::mt19937 rng(8);
  const auto r0 = random_pure(6, rng), rp = random_pure(5, rng);
  const BeamSplitterSpec spec{0.3};
  BeamSplitOptions opts;
  opts.tail_tolerance = 0.0;
  const auto s = beam_split(r0, rp, spec, opts);
  const QuadratureAxis ax{-8, 8, 81};
  for (double phi : {0.0, 1.1}) {
    const auto a = mixed_joint_homodyne(r0, rp, spec, phi, ax, ax);
    const auto b = homodyne_joint(s.state, phi, phi, ax, ax);
    EXPECT_LT((a.values - b.values).cwiseAbs().maxCoeff(), 1e-12) << phi;
  }
  EXPECT_THROW(mixed_joint_homodyne(r0, rp, spec, 0.0, {-1, 1, 11}, {-1, 1, 11}), GridTooSmall);
}
