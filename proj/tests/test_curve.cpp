#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <xxzr/curve.hpp>

#include "support.hpp"

using namespace xxzr;
using xxzr::testing::flow_point;
using xxzr::testing::random_leaf;
using xxzr::testing::random_params;
using xxzr::testing::random_point;

namespace {

constexpr double kPi = std::numbers::pi;
const cplx kI(0.0, 1.0);

SpectralCurve make_curve(int N, std::uint64_t seed) { return curve_from_point(random_point(N, seed), random_params(N, seed)); }

// Long division of a monic-basis polynomial by (lambda - 2), remainder required to vanish.
std::vector<cplx> divide_by_lambda_minus_2(std::vector<cplx> p) {
  int n = static_cast<int>(p.size()) - 1;
  std::vector<cplx> q(n, 0.0);
  for (int i = n; i >= 1; --i) {
    q[i - 1] = p[i];
    p[i - 1] += 2.0 * p[i];
  }
  EXPECT_LT(std::abs(p[0]), 1e-12);
  return q;
}

double agm(double a, double b) {
  // Quadratic convergence: 40 steps reach the rounding floor for any sane input.
  for (int i = 0; i < 40; ++i) {
    double m = 0.5 * (a + b);
    b = std::sqrt(a * b);
    a = m;
  }
  return a;
}

double complete_k(double k) { return kPi / (2.0 * agm(1.0, std::sqrt(1.0 - k * k))); }

}  // namespace

TEST(Differentials, RPolynomialsMatchDivision) {
  std::vector<std::vector<cplx>> expected{{1.0}, {2.0, 1.0}, {1.0, 2.0, 1.0}};
  for (int j = 1; j <= 3; ++j) {
    auto r = r_poly(j);
    auto q = chebyshev_q(j);
    auto c = q.c;
    c[0] -= 2.0;
    auto div = divide_by_lambda_minus_2(c);
    ASSERT_EQ(r.c.size(), expected[j - 1].size());
    for (std::size_t i = 0; i < r.c.size(); ++i) {
      EXPECT_LT(std::abs(r.c[i] - expected[j - 1][i]), 1e-14);
      EXPECT_LT(std::abs(r.c[i] - div[i]), 1e-14);
    }
  }
}

TEST(CurveFromPoint, SingleSiteAtOriginIsSingular) {
  ModelParams p;
  p.N = 1;
  p.xi = 1.0;
  p.a = {1.0};
  PhasePoint x;
  x.sites.push_back({0.0, 0.0, 1.0});
  try {
    curve_from_point(x, p);
    FAIL() << "expected a singular-curve error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::singular_curve);
  }
}

TEST(CurveFromPoint, LeadingCoefficientAndDivisorOnCurve) {
  for (int N : {2, 3, 4}) {
    auto p = random_params(N, 20 + N);
    auto x = random_point(N, 20 + N);
    auto c = curve_from_point(x, p);
    cplx lead = c.p_sum() / 2.0;
    EXPECT_LT(std::abs(c.q2n.leading() - lead * lead), 1e-9 * std::max(1.0, std::abs(lead * lead)));
    EXPECT_EQ(c.hc.genus(), N - 1);
    for (auto b : c.hc.branch_points()) EXPECT_LT(std::abs(c.hc.q(b)), 1e-8 * std::pow(c.hc.scale(), 2 * N));
    auto ch = sov_chart(x, p);
    for (int k = 0; k < ch.size(); ++k) {
      cplx q = c.q2n.eval(ch.lambdas[k]);
      EXPECT_LT(std::abs(q - ch.ys[k] * ch.ys[k]), 1e-8 * std::max(1.0, std::abs(q)));
      cplx y = c.y1(ch.lambdas[k]);
      EXPECT_LT(std::min(std::abs(y - ch.ys[k]), std::abs(y + ch.ys[k])), 1e-7 * std::max(1.0, std::abs(y)));
    }
  }
}

TEST(CurveFromPoint, HamiltoniansRebuildTheSameCurve) {
  auto c = make_curve(3, 5);
  auto d = curve_from_hamiltonians(c.params, c.leaf, c.hamiltonians, c.bigP);
  EXPECT_LT(std::abs(d.bigP - c.bigP), 1e-10 * std::abs(c.bigP));
  for (int i = 0; i <= 6; ++i) EXPECT_LT(std::abs(d.q2n.c[i] - c.q2n.c[i]), 1e-9 * (1.0 + std::abs(c.q2n.c[i])));
}

TEST(HomologyBasis, EllipticPeriodsMatchAgm) {
  // y^2 = (lambda^2 - 1)(lambda^2 - 4): cuts [-2, -1], [1, 2].
  HyperellipticCurve C({4.0, 0.0, -5.0, 0.0, 1.0}, 1.0);
  auto hb = homology_basis(C);
  Numerators f = [](cplx) { return Eigen::VectorXcd::Ones(1); };
  auto rp = raw_periods(C, hb, f, 1, 1e-14);
  cplx tau = rp.B(0, 0) / rp.A(0, 0);
  // Roots e1 < e2 < e3 < e4: modulus k^2 = (e2 - e1)(e4 - e3) / ((e4 - e2)(e3 - e1)) = 1/9.
  double k = 1.0 / 3.0, kp = std::sqrt(1.0 - k * k);
  double ratio = complete_k(kp) / complete_k(k);
  EXPECT_LT(std::abs(tau - cplx(0.0, ratio)), 1e-8);
  // |A| = 4 K(k) / sqrt((e4 - e2)(e3 - e1)).
  EXPECT_LT(std::abs(std::abs(rp.A(0, 0)) - 4.0 * complete_k(k) / 3.0), 1e-8);
}

TEST(HomologyBasis, BranchPointsSortedAndDeterministic) {
  auto c = make_curve(3, 11);
  auto b = c.hc.branch_points();
  for (std::size_t i = 1; i < b.size(); ++i)
    EXPECT_TRUE(b[i - 1].real() < b[i].real() || (b[i - 1].real() == b[i].real() && b[i - 1].imag() <= b[i].imag()));
  auto c2 = make_curve(3, 11);
  auto pd1 = periods(c, homology_basis(c.hc));
  auto pd2 = periods(c2, homology_basis(c2.hc));
  EXPECT_EQ((pd1.riemann - pd2.riemann).cwiseAbs().maxCoeff(), 0.0);
}

TEST(HomologyBasis, ClusteredCutsRejected) {
  // Two branch points 1e-9 apart make the curve singular at the working tolerance.
  std::vector<cplx> roots{-3.0, -1.0, 1.0, 1.0 + 1e-9, 2.0, 4.0};
  std::vector<cplx> q{1.0};
  for (auto r : roots) {
    std::vector<cplx> n(q.size() + 1, 0.0);
    for (std::size_t i = 0; i < q.size(); ++i) {
      n[i + 1] += q[i];
      n[i] -= r * q[i];
    }
    q = n;
  }
  try {
    HyperellipticCurve C(q, 1.0);
    homology_basis(C);
    FAIL() << "expected a singular-curve or basis error";
  } catch (const Error& e) {
    EXPECT_TRUE(e.kind() == ErrorKind::singular_curve || e.kind() == ErrorKind::basis);
  }
}

class PeriodInvariants : public ::testing::TestWithParam<std::pair<int, int>> {};

TEST_P(PeriodInvariants, Hold) {
  auto [N, seed] = GetParam();
  auto c = make_curve(N, seed);
  auto pd = periods(c, homology_basis(c.hc));
  EXPECT_LT(pd.symmetry_residual, 1e-8);
  EXPECT_GT(pd.min_imag_eigenvalue, 0.0);
  EXPECT_LT(pd.normalization_residual, 1e-8);
  EXPECT_LT(pd.residue_residual, 1e-8);
  EXPECT_LT(pd.w_normalization_residual, 1e-8);
  EXPECT_LT(pd.w_residue_residual, 1e-8);
  for (int j = 0; j + 1 < N; ++j) EXPECT_EQ(pd.norm(j, N - 1), cplx(0.0));
  EXPECT_EQ(pd.norm(N - 1, N - 1), cplx(1.0));
  for (int k = 0; k < N; ++k) EXPECT_LT(std::abs(pd.c[k] - 4.0 * c.p_sum() * pd.norm(N - 1, k)), 1e-12 * (1.0 + std::abs(pd.c[k])));
  // A-periods of d omega_j are the identity.
  Eigen::MatrixXcd ah = pd.a_periods.topLeftCorner(N - 1, N - 1);
  EXPECT_LT((pd.norm_hol * ah.transpose() - Eigen::MatrixXcd::Identity(N - 1, N - 1)).cwiseAbs().maxCoeff(), 1e-8);
}

INSTANTIATE_TEST_SUITE_P(Curves, PeriodInvariants,
                         ::testing::Values(std::pair{2, 1}, std::pair{2, 2}, std::pair{3, 3}, std::pair{3, 4}, std::pair{4, 5}));

TEST(Differentials, ResiduesAtInfinity) {
  auto c = make_curve(3, 7);
  auto om = omega_numerators(c);
  auto rp = residue_at_infinity(c.hc, om, 1), rm = residue_at_infinity(c.hc, om, -1);
  // Contour integral around oo+ is 2 pi i Res.
  EXPECT_LT(std::abs(2.0 * kPi * kI * rp[2] - 2.0 * kPi * kI), 1e-8);
  EXPECT_LT(std::abs(rm[2] + 1.0), 1e-8);
  for (int j = 0; j < 2; ++j) {
    EXPECT_LT(std::abs(rp[j]), 1e-8);
    EXPECT_LT(std::abs(rm[j]), 1e-8);
  }
}

TEST(Differentials, SigmaFormsHaveTauParity) {
  auto c = make_curve(3, 8);
  Rng rng(99);
  for (int s = 0; s < 5; ++s) {
    cplx w = rng.annulus(0.5, 2.0);
    cplx y = c.y_sigma(w);
    auto f = sigma_forms(3, w, y);
    auto g = sigma_forms_pulled_back(3, w, y);
    EXPECT_LT((f.plus - g.plus).cwiseAbs().maxCoeff(), 1e-12 * (1.0 + f.plus.cwiseAbs().maxCoeff()));
    EXPECT_LT((f.minus + g.minus).cwiseAbs().maxCoeff(), 1e-12 * (1.0 + f.minus.cwiseAbs().maxCoeff()));
  }
}

TEST(Differentials, LambdaChartMatchesWChart) {
  for (int N : {2, 3}) {
    auto c = make_curve(N, 30 + N);
    auto ac = action_contours(c);
    auto M = action_contour_periods(c, ac);
    for (int form : {0, N - 1}) {
      cplx w = w_chart_period(c, ac, form);
      EXPECT_LT(std::abs(w - M(0, form)), 1e-8 * (1.0 + std::abs(w)));
    }
    // The capsule loop is homologous to A_1.
    auto pd = periods(c, homology_basis(c.hc));
    EXPECT_LT(std::abs(M(0, 0) - pd.a_periods(0, 0)), 1e-8 * (1.0 + std::abs(M(0, 0))));
  }
}

TEST(AbelMap, VanishesAtBasePoint) {
  auto c = make_curve(3, 9);
  auto pd = periods(c, homology_basis(c.hc));
  cplx e1 = c.hc.branch_points()[0];
  auto a = abel_map(c, pd, {{e1, 0.0, 0}, {e1, 0.0, 0}});
  EXPECT_LT(a.normalized.cwiseAbs().maxCoeff(), 1e-14);
}

TEST(AbelMap, InvolutionPairsGiveLatticeVectors) {
  for (int N : {2, 3}) {
    auto c = make_curve(N, 40 + N);
    auto pd = periods(c, homology_basis(c.hc));
    Rng rng(40 + N);
    for (int s = 0; s < 3; ++s) {
      cplx lam = rng.disk(c.hc.scale());
      cplx y = c.y1(lam);
      auto a = abel_map(c, pd, {{lam, y, 0}, {lam, -y, 0}});
      auto red = reduce_lattice(a.normalized, pd.riemann);
      EXPECT_LT(red.reduced.cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(AbelMap, LabelIndependent) {
  auto p = random_params(3, 12);
  auto x = random_point(3, 12);
  auto c = curve_from_point(x, p);
  auto pd = periods(c, homology_basis(c.hc));
  auto d = divisor_of(sov_chart(x, p));
  auto a1 = abel_map(c, pd, d);
  std::swap(d[0], d[1]);
  auto a2 = abel_map(c, pd, d);
  EXPECT_EQ((a1.normalized - a2.normalized).cwiseAbs().maxCoeff(), 0.0);
  auto r1 = reduce_lattice(a1.normalized, pd.riemann);
  auto r2 = reduce_lattice(r1.reduced, pd.riemann);
  EXPECT_EQ((r1.reduced - r2.reduced).cwiseAbs().maxCoeff(), 0.0);
}

TEST(AbelMap, BranchPointIsTwoTorsion) {
  auto c = make_curve(2, 13);
  auto pd = periods(c, homology_basis(c.hc));
  // A branch point is its own involution image: 2 A(e) is a lattice vector.
  cplx e = c.hc.branch_points()[2];
  auto a = abel_point(c, pd, {e, 0.0, 0});
  auto red = reduce_lattice(2.0 * a, pd.riemann);
  EXPECT_LT(red.reduced.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(HomologyBasis, StableUnderSmallPerturbation) {
  auto p = random_params(3, 14);
  auto x = random_point(3, 14);
  auto c0 = curve_from_point(x, p);
  auto pd0 = periods(c0, homology_basis(c0.hc));
  auto y = x;
  for (auto& s : y.sites) s.e += 1e-7;
  auto c1 = curve_from_point(y, p);
  auto pd1 = periods(c1, homology_basis(c1.hc));
  EXPECT_LT((pd1.riemann - pd0.riemann).cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_LT((pd1.norm - pd0.norm).cwiseAbs().maxCoeff(), 1e-4 * (1.0 + pd0.norm.cwiseAbs().maxCoeff()));
}

TEST(LineFit, RejectsTooFewSamples) {
  EXPECT_THROW(fit_line({0.0}, {cplx(1.0)}), Error);
}

class Linearization : public ::testing::TestWithParam<int> {};

TEST_P(Linearization, AnglesMoveLinearly) {
  const int N = 2, k = GetParam();
  auto p = random_params(N, 1);
  auto x = flow_point(N, 1);
  auto c = curve_from_point(x, p);
  auto pd = periods(c, homology_basis(c.hc));
  auto tr = integrate_flow(x, p, k, 0.3, 1e-11, 11);
  auto charts = divisor_track(tr, p);
  std::vector<Eigen::VectorXcd> F, A;
  for (auto& ch : charts) {
    F.push_back(angle_coordinates(c, pd, ch));
    A.push_back(pd.norm_hol * F.back().head(N - 1));
  }
  auto U = unwrap_angles(F, angle_lattice(c, pd));
  for (int j = 0; j < N; ++j) {
    std::vector<cplx> v;
    for (auto& u : U) v.push_back(u[j]);
    auto fit = fit_line(tr.times, v);
    EXPECT_LT(fit.residual, 1e-6);
    EXPECT_LT(std::abs(fit.slope - (j + 1 == k ? 1.0 : 0.0)), 1e-6);
  }
  std::vector<cplx> ft;
  for (auto& u : U) {
    cplx s = 4.0 * c.p_sum() * u[N - 1];
    for (int m = 0; m + 1 < N; ++m) s -= pd.nu[m] * u[m];
    ft.push_back(s);
  }
  auto fit = fit_line(tr.times, ft);
  EXPECT_LT(fit.residual, 1e-6);
  EXPECT_LT(std::abs(fit.slope - pd.c[k - 1]), 1e-6 * (1.0 + std::abs(pd.c[k - 1])));
  // Abel image moves along U^(k) modulo the period lattice.
  Eigen::MatrixXcd L(N - 1, 2 * (N - 1));
  L << Eigen::MatrixXcd::Identity(N - 1, N - 1), pd.riemann;
  auto UA = unwrap_angles(A, L);
  for (std::size_t i = 0; i < UA.size(); ++i) {
    Eigen::VectorXcd r = UA[i] - UA[0] - tr.times[i] * pd.U(k);
    EXPECT_LT(r.cwiseAbs().maxCoeff(), 1e-6);
  }
}

INSTANTIATE_TEST_SUITE_P(Flows, Linearization, ::testing::Values(1, 2));

TEST(Linearization, RefinedSeriesHasUnitSlopes) {
  const int N = 3;
  auto p = random_params(N, 2);
  auto x = flow_point(N, 2);
  auto c = curve_from_point(x, p);
  auto pd = periods(c, homology_basis(c.hc));
  std::vector<double> ts;
  for (int i = 0; i <= 5; ++i) ts.push_back(0.1 * i);
  for (int k = 1; k <= N; ++k) {
    auto s = angle_series(c, pd, x, p, k, ts);
    ASSERT_EQ(s.angles.size(), ts.size());
    for (int j = 0; j < N; ++j) {
      std::vector<cplx> v;
      for (auto& u : s.angles) v.push_back(u[j]);
      auto fit = fit_line(s.times, v);
      EXPECT_LT(fit.residual, 1e-6) << "k = " << k << ", j = " << j;
      EXPECT_LT(std::abs(fit.slope - (j + 1 == k ? 1.0 : 0.0)), 1e-6) << "k = " << k << ", j = " << j;
    }
  }
}

TEST(ActionPeriods, DerivativesAreScaledPeriods) {
  for (int N : {2, 3}) {
    auto p = random_params(N, 1);
    auto x = sample_leaf(random_leaf(N, 1), 10);
    auto c = curve_from_point(x, p);
    auto ac = action_contours(c);
    auto M = action_contour_periods(c, ac);
    Eigen::MatrixXcd DJ(N, N);
    for (int k = 1; k <= N; ++k) {
      double h = 1e-5 * (1.0 + std::abs(c.hamiltonians[k]));
      auto P1 = c.hamiltonians, P2 = c.hamiltonians;
      P1[k] += h;
      P2[k] -= h;
      auto J1 = action_periods(curve_from_hamiltonians(p, c.leaf, P1, c.bigP), ac).J;
      auto J2 = action_periods(curve_from_hamiltonians(p, c.leaf, P2, c.bigP), ac).J;
      DJ.col(k - 1) = (J1 - J2) / (2.0 * h);
    }
    // dJ_i/dP_k = 2 oint Omega_k (k < N), -oint Omega_N / (2 (P + 1/P)).
    Eigen::MatrixXcd E = 2.0 * M;
    E.col(N - 1) = -M.col(N - 1) / (2.0 * c.p_sum());
    EXPECT_LT((DJ - E).cwiseAbs().maxCoeff(), 1e-4 * E.cwiseAbs().maxCoeff());
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(DJ);
    EXPECT_GT(svd.singularValues().minCoeff(), 1e-6);
  }
}

TEST(ActionPeriods, LastActionTracksLogP) {
  const int N = 3;
  auto p = random_params(N, 1);
  auto leaf = random_leaf(N, 1);
  std::vector<SpectralCurve> curves;
  double R = 0.0;
  for (int s = 0; s < 3; ++s) {
    curves.push_back(curve_from_point(sample_leaf(leaf, 10 + s), p));
    R = std::max(R, action_contours(curves.back()).w_radius);
  }
  std::vector<cplx> d;
  for (auto& c : curves) {
    auto ac = action_contours(c);
    ac.w_radius = R;
    auto J = action_periods(c, ac).J;
    d.push_back(J[N - 1] - 2.0 * kPi * kI * std::log(c.bigP));
  }
  for (auto v : d) EXPECT_LT(std::abs(v - d[0]), 1e-6);
  // The constant itself is 2 pi i N log R - 2 pi^2 N.
  EXPECT_LT(std::abs(d[0] - (2.0 * kPi * kI * double(N) * std::log(R) - 2.0 * kPi * kPi * N)), 1e-8);
}

TEST(ActionPeriods, HomologousLoopsDifferByAFlowConstant) {
  const int N = 2;
  auto p = random_params(N, 1);
  auto x = flow_point(N, 1);
  auto tr = integrate_flow(x, p, 1, 0.2, 1e-11, 5);
  std::vector<cplx> diffs;
  for (auto& s : tr.states) {
    auto c = curve_from_point(s, p);
    auto wide = action_contours(c), tight = action_contours(c, 0.6);
    tight.w_radius = wide.w_radius;
    auto Jw = action_periods(c, wide), Jt = action_periods(c, tight);
    ASSERT_EQ(Jw.winding[0], Jt.winding[0]);
    diffs.push_back(Jw.J[0] - Jt.J[0]);
  }
  for (auto v : diffs) EXPECT_LT(std::abs(v - diffs[0]), 1e-6);
}
