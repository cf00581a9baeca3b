#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <xxzr/dynamics.hpp>
#include <xxzr/theta.hpp>

#include "support.hpp"

using namespace xxzr;
using xxzr::testing::flow_point;
using xxzr::testing::random_params;
using xxzr::testing::random_point;
using xxzr::testing::rel;

namespace {

constexpr double kPi = std::numbers::pi;
const cplx kI(0.0, 1.0);

Eigen::MatrixXcd genus2_matrix() {
  Eigen::MatrixXcd B(2, 2);
  B << cplx(0.3, 1.1), cplx(0.2, 0.35), cplx(0.2, 0.35), cplx(-0.4, 0.9);
  return B;
}

// One-variable theta by direct summation, used as a factorized oracle.
cplx theta1d(cplx z, cplx tau) {
  cplx s = 0.0;
  for (int n = -40; n <= 40; ++n) s += std::exp(kPi * kI * (double(n * n) * tau + 2.0 * n * z));
  return s;
}

struct Setup {
  ModelParams p;
  PhasePoint x;
  SpectralCurve curve;
  PeriodData pd;
  ThetaContext ctx;
};

Setup make_setup(int N, std::uint64_t seed) {
  Setup s;
  s.p = random_params(N, seed);
  s.x = flow_point(N, seed);
  s.curve = curve_from_point(s.x, s.p);
  s.pd = periods(s.curve, homology_basis(s.curve.hc));
  s.ctx = make_theta_context(s.curve, s.pd, sov_chart(s.x, s.p));
  return s;
}

}  // namespace

TEST(Theta, SquareLatticeValueAtOrigin) {
  Eigen::MatrixXcd B(1, 1);
  B(0, 0) = kI;
  RiemannTheta th(B);
  double expected = std::pow(kPi, 0.25) / std::tgamma(0.75);
  EXPECT_LT(std::abs(th(Eigen::VectorXcd::Zero(1)) - expected), 1e-14);
}

TEST(Theta, DiagonalMatrixFactorizes) {
  Eigen::MatrixXcd B = Eigen::MatrixXcd::Zero(2, 2);
  B(0, 0) = cplx(0.2, 0.9);
  B(1, 1) = cplx(-0.1, 1.3);
  RiemannTheta th(B);
  Eigen::VectorXcd z(2);
  z << cplx(0.31, -0.2), cplx(-0.45, 0.6);
  cplx expected = theta1d(z[0], B(0, 0)) * theta1d(z[1], B(1, 1));
  EXPECT_LT(std::abs(th(z) - expected), 1e-12 * std::abs(expected));
}

TEST(Theta, QuasiPeriodicity) {
  RiemannTheta th(genus2_matrix());
  const auto& B = th.period_matrix();
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXcd z(2);
    z << rng.disk(1.0), rng.disk(1.0);
    for (int i = 0; i < 2; ++i) {
      Eigen::VectorXcd e = Eigen::VectorXcd::Zero(2);
      e[i] = 1.0;
      cplx t0 = th(z);
      EXPECT_LT(std::abs(th(z + e) - t0), 1e-10 * std::abs(t0));
      cplx f = std::exp(-kPi * kI * B(i, i) - 2.0 * kPi * kI * z[i]);
      EXPECT_LT(std::abs(th(z + B.col(i)) - f * t0), 1e-10 * std::abs(f * t0));
    }
    EXPECT_LT(std::abs(th(-z) - th(z)), 1e-12 * th.eval(z).abs_sum);
  }
}

TEST(Theta, ScaledEvaluationSurvivesFarArguments) {
  RiemannTheta th(genus2_matrix());
  const auto& B = th.period_matrix();
  Eigen::VectorXcd z(2);
  z << cplx(0.2, -0.1), cplx(0.05, 0.3);
  Eigen::VectorXd m(2);
  m << 40.0, -55.0;
  Eigen::VectorXcd mc = m.cast<cplx>();
  auto far = th.eval_scaled(z + B * mc + Eigen::VectorXcd::Constant(2, 3.0));
  auto near = th.eval_scaled(z);
  ASSERT_TRUE(std::isfinite(std::abs(far.value)));
  EXPECT_FALSE(std::isfinite(std::abs(th(z + B * mc))));
  cplx expected = -kPi * kI * (mc.transpose() * B * mc)(0) - 2.0 * kPi * kI * (mc.transpose() * z)(0);
  cplx d = far.log_value() - near.log_value() - expected;
  d -= 2.0 * kPi * kI * std::round(d.imag() / (2.0 * kPi));
  EXPECT_LT(std::abs(d), 1e-10);
  auto u = RiemannTheta::unscale(near);
  EXPECT_LT(std::abs(u.value - th(z)), 1e-14 * u.abs_sum);
}

TEST(Theta, GradientMatchesDifferences) {
  RiemannTheta th(genus2_matrix());
  Eigen::VectorXcd z(2);
  z << cplx(0.1, 0.2), cplx(-0.3, 0.15);
  auto t = th.eval(z);
  for (int i = 0; i < 2; ++i) {
    Eigen::VectorXcd d = Eigen::VectorXcd::Zero(2);
    d[i] = 1e-5;
    cplx fd = (th(z + d) - th(z - d)) / 2e-5;
    EXPECT_LT(std::abs(fd - t.grad[i]), 1e-7 * (1.0 + std::abs(t.grad[i])));
  }
}

TEST(Theta, TruncationIsStable) {
  RiemannTheta th(genus2_matrix());
  Eigen::VectorXcd z(2);
  z << cplx(0.4, 0.3), cplx(0.1, -0.5);
  auto t = th.eval(z);
  auto t2 = th.eval(z, 2 * std::max(t.radius, 1));
  EXPECT_LT(std::abs(t2.value - t.value), 1e-12 * t.abs_sum);
}

TEST(Theta, RejectsNonPositiveImaginaryPart) {
  Eigen::MatrixXcd B(2, 2);
  B << cplx(0, 1), cplx(0, 2), cplx(0, 2), cplx(0, 1);
  EXPECT_THROW(RiemannTheta{B}, Error);
}

TEST(Theta, OddCharacteristicIsOdd) {
  RiemannTheta th(genus2_matrix());
  auto op = odd_point(th);
  EXPECT_EQ(std::lround(4.0 * op.a.dot(op.b)) % 2, 1);
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXcd z(2);
    z << rng.disk(0.8), rng.disk(0.8);
    auto p = theta_odd(th, op, z), m = theta_odd(th, op, -z);
    EXPECT_LT(std::abs(p.value + m.value), 1e-9 * p.abs_sum);
  }
}

class ThetaCurves : public ::testing::TestWithParam<int> {};

TEST_P(ThetaCurves, RiemannConstantValidates) {
  int N = GetParam();
  auto s = make_setup(N, 2);
  const auto& k = s.ctx.k;
  EXPECT_LT(k.divisor_residual, 1e-7);
  EXPECT_LT(k.validation_residual, 1e-7);
  EXPECT_GT(k.probe_minimum, 1e-2);
  // A lattice shift of A(D) leaves K unchanged modulo the lattice.
  auto D = divisor_of(sov_chart(s.x, s.p));
  auto apts = abel_points(s.curve, s.pd, D);
  apts[0] += s.pd.riemann.col(0) + Eigen::VectorXcd::Ones(N - 1);
  EXPECT_LT(divisor_vanishing(s.ctx.theta, apts, k.K), 1e-7);
}

TEST_P(ThetaCurves, InfinityRepresentativesAreConsistent) {
  int N = GetParam();
  auto s = make_setup(N, 2);
  auto ap = abel_point(s.curve, s.pd, {0.0, 0.0, 1});
  Eigen::VectorXcd d = reduce_lattice(ap - s.ctx.a_plus, s.pd.riemann).reduced;
  EXPECT_LT(d.cwiseAbs().maxCoeff(), 1e-8);
  cplx hq = s.curve.h_at(kI);
  auto aq = abel_point(s.curve, s.pd, {-2.0, hq, 0});
  d = reduce_lattice(aq - s.ctx.a_q, s.pd.riemann).reduced;
  EXPECT_LT(d.cwiseAbs().maxCoeff(), 1e-8);
}

TEST_P(ThetaCurves, CrossRatioIsConstant) {
  int N = GetParam();
  auto s = make_setup(N, 3);
  auto d = abel_points(s.curve, s.pd, detail::ring_points(s.curve, N - 1, 0.3, 0.2));
  auto dp = abel_points(s.curve, s.pd, detail::ring_points(s.curve, N - 1, 0.45, 2.0));
  auto probes = abel_points(s.curve, s.pd, detail::ring_points(s.curve, 10, 0.6, 0.9));
  cplx m0 = cross_ratio_function(s.ctx, d, dp, probes[0]);
  for (auto& q : probes) EXPECT_LT(std::abs(cross_ratio_function(s.ctx, d, dp, q) - m0), 1e-8 * std::abs(m0));
}

TEST_P(ThetaCurves, RhoFormsAgree) {
  int N = GetParam();
  auto s = make_setup(N, 4);
  auto ch = sov_chart(s.x, s.p);
  for (auto& p : detail::ring_points(s.curve, 6, 0.5, 0.3)) {
    cplx r1 = rho_rational(s.curve, ch, p);
    cplx r2 = rho_theta(s.ctx, s.ctx.a_divisor, abel_point(s.curve, s.pd, p));
    EXPECT_LT(std::abs(r1 - r2), 1e-6 * std::max(1.0, std::abs(r1)));
  }
  // rho -> 1 at oo+ and -> 0 at oo-.
  EXPECT_LT(std::abs(rho_at_infinity(s.curve, ch, 1) - 1.0), 1e-8);
  EXPECT_LT(std::abs(rho_at_infinity(s.curve, ch, -1)), 1e-8);
}

TEST_P(ThetaCurves, QMatchesFlow) {
  int N = GetParam();
  double tol = N == 2 ? 1e-6 : 1e-4;
  auto s = make_setup(N, 1);
  for (int k = 1; k <= N; ++k) {
    auto tr = integrate_flow(s.x, s.p, k, 0.5, 1e-12, 6);
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
      cplx q = sov_chart(tr.states[i], s.p).bigQ;
      EXPECT_LT(rel(q_evolution(s.ctx, k, tr.times[i]), q), tol) << "k=" << k << " t=" << tr.times[i];
    }
  }
}

// Individual divisor points move far between samples; the per-point Abel images are only
// continued reliably on a fine grid.
TEST_P(ThetaCurves, TrackedDivisorFormulaMatchesFlow) {
  int N = GetParam();
  auto s = make_setup(N, 1);
  auto tr = integrate_flow(s.x, s.p, 1, 0.5, 1e-12, 101);
  auto charts = divisor_track(tr, s.p);
  std::vector<std::vector<Eigen::VectorXcd>> tracked;
  for (auto& ch : charts) tracked.push_back(abel_points(s.curve, s.pd, divisor_of(ch)));
  tracked = unwrap_abel(tracked, s.pd.riemann);
  for (std::size_t i = 0; i < charts.size(); i += 10)
    EXPECT_LT(rel(q_from_tracked(s.ctx, 1, tr.times[i], tracked[0], tracked[i]), charts[i].bigQ), 1e-6);
}

TEST_P(ThetaCurves, CorruptedNormalizationBreaksQ) {
  int N = GetParam();
  auto s = make_setup(N, 1);
  auto tr = integrate_flow(s.x, s.p, 1, 0.5, 1e-12, 2);
  auto ctx = s.ctx;
  ctx.pd.c[0] *= 1.1;
  ctx.pd.norm(0, 0) *= 1.1;
  double t = tr.times.back();
  cplx q = sov_chart(tr.states.back(), s.p).bigQ;
  EXPECT_LT(rel(q_evolution(s.ctx, 1, t), q), 1e-4);
  EXPECT_GT(rel(q_evolution(ctx, 1, t), q), 1e-3);
}

TEST_P(ThetaCurves, ReconstructsMonodromy) {
  int N = GetParam();
  auto s = make_setup(N, 1);
  int k = 1;
  auto tr = integrate_flow(s.x, s.p, k, 0.5, 1e-12, 2);
  Rng rng(17);
  for (int trial = 0; trial < 3; ++trial) {
    cplx z = xxzr::testing::random_z(rng);
    for (std::size_t i : {std::size_t(0), tr.times.size() - 1}) {
      double tol = i == 0 ? 1e-8 : 1e-5;
      Mat2c T = reconstruct_monodromy(s.ctx, k, tr.times[i], z);
      auto data = reflection_monodromy(tr.states[i], s.p);
      Mat2c E;
      E << data.A(z), data.B(z), data.C(z), data.D(z);
      EXPECT_LT((T - E).cwiseAbs().maxCoeff(), tol * std::max(1.0, E.cwiseAbs().maxCoeff()));
      EXPECT_LT(std::abs(T.trace() / 2.0 - s.curve.data->transfer(z)), 1e-8 * (1.0 + std::abs(T.trace())));
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Curves, ThetaCurves, ::testing::Values(2, 3));

TEST(SquareAtMinusTwo, MatchesDeterminantFormOnly) {
  for (int N : {1, 2, 3}) {
    for (std::uint64_t seed : {1, 2}) {
      auto p = random_params(N, seed);
      auto c = curve_from_point(random_point(N, seed), p);
      auto r = h2_readings(c);
      EXPECT_LT(r.q_residual, 1e-9);
      EXPECT_LT(r.derived_residual, 1e-9);
      EXPECT_GT(r.linear_residual, 1e-3);
      EXPECT_GT(r.squared_residual, 1e-3);
    }
  }
}
