#include <gtest/gtest.h>

#include <xxzr/laurent.hpp>
#include <xxzr/phasespace.hpp>

using namespace xxzr;

namespace {

LaurentPoly<cplx> random_laurent(Rng& rng, int lo, int hi) {
  std::vector<cplx> c;
  for (int n = lo; n <= hi; ++n) c.push_back(rng.disk(1.0));
  return {lo, c};
}

double dist(const LaurentPoly<cplx>& a, const LaurentPoly<cplx>& b) { return (a - b).max_abs(); }

}  // namespace

TEST(Eval, Basics) {
  EXPECT_EQ(LaurentPoly<cplx>(-1, {-1.0, 0.0, 1.0}).eval(1.0), cplx(0.0));
  EXPECT_NEAR(std::abs(LaurentPoly<cplx>(-2, {1.0, 0, 0, 0, 1.0}).eval(cplx(0, 1)) + 2.0), 0.0, 1e-15);
  EXPECT_EQ(LaurentPoly<cplx>(-1, {2.0, 5.0, 3.0}).eval(2.0), cplx(12.0));
  EXPECT_THROW(LaurentPoly<cplx>(-1, {2.0, 5.0}).eval(0.0), Error);
}

TEST(Storage, TightWindow) {
  LaurentPoly<cplx> p(-3, {0.0, 0.0, 1.0, 2.0, 0.0});
  EXPECT_EQ(p.low(), -1);
  EXPECT_EQ(p.high(), 0);
  EXPECT_TRUE((p - p).is_zero());
}

TEST(Substitute, Modes) {
  LaurentPoly<cplx> p(-1, {-1.0, 0.0, 1.0});
  EXPECT_EQ(dist(substitute(p, SubstMode::invert), LaurentPoly<cplx>(-1, {1.0, 0.0, -1.0})), 0.0);
  EXPECT_EQ(dist(substitute(LaurentPoly<cplx>::monomial(1.0, 2), SubstMode::scale, 2.0), LaurentPoly<cplx>::monomial(4.0, 2)), 0.0);
  EXPECT_EQ(dist(substitute(p, SubstMode::negate), p * cplx(-1.0)), 0.0);
}

TEST(Matmul, IdentityAndAssociativity) {
  Rng rng(1);
  auto rm = [&] {
    return LaurentMatrix<cplx>{random_laurent(rng, -3, 3), random_laurent(rng, -2, 3), random_laurent(rng, -3, 2), random_laurent(rng, -1, 1)};
  };
  for (int t = 0; t < 20; ++t) {
    auto A = rm(), B = rm(), C = rm();
    auto AI = matmul(A, LaurentMatrix<cplx>::identity());
    EXPECT_EQ(dist(AI.a, A.a) + dist(AI.d, A.d) + dist(AI.b, A.b) + dist(AI.c, A.c), 0.0);
    auto X = matmul(matmul(A, B), C), Y = matmul(A, matmul(B, C));
    double sc = X.a.max_abs();
    EXPECT_LT(std::max({dist(X.a, Y.a), dist(X.b, Y.b), dist(X.c, Y.c), dist(X.d, Y.d)}), 1e-12 * sc);
  }
}

TEST(SigmaPlus, Example) {
  LaurentPoly<cplx> f(-1, {2.0, 5.0, 3.0, 1.0});
  auto [s, p] = sigma_plus_decompose(f);
  EXPECT_EQ(dist(s, LaurentPoly<cplx>(-1, {2.0, 5.0, 2.0})), 0.0);
  EXPECT_EQ(dist(p, LaurentPoly<cplx>(1, {1.0, 1.0})), 0.0);
}

TEST(SigmaPlus, EdgeCases) {
  LaurentPoly<cplx> sym(-2, {1.0, 2.0, 3.0, 2.0, 1.0});
  auto [s1, p1] = sigma_plus_decompose(sym);
  EXPECT_EQ(dist(s1, sym), 0.0);
  EXPECT_TRUE(p1.is_zero());
  LaurentPoly<cplx> pos(1, {1.0, 2.0});
  auto [s2, p2] = sigma_plus_decompose(pos);
  EXPECT_TRUE(s2.is_zero());
  EXPECT_EQ(dist(p2, pos), 0.0);
}

TEST(SigmaPlus, RecombineProperty) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    int lo = static_cast<int>(rng.uniform(-6, 1)), hi = static_cast<int>(rng.uniform(0, 6));
    auto f = random_laurent(rng, lo, hi);
    auto [s, p] = sigma_plus_decompose(f);
    EXPECT_EQ(dist(s + p, f), 0.0);
    EXPECT_EQ(dist(substitute(s, SubstMode::invert), s), 0.0);
    if (!p.is_zero()) EXPECT_GE(p.low(), 1);
  }
}

TEST(DivideExact, Examples) {
  LaurentPoly<cplx> zpi(-1, {1.0, 0.0, 1.0});
  auto q = divide_exact(LaurentPoly<cplx>(-2, {-1.0, 0, 0, 0, 1.0}), zpi);
  EXPECT_LT(dist(q, LaurentPoly<cplx>(-1, {-1.0, 0.0, 1.0})), 1e-15);
  try {
    divide_exact(LaurentPoly<cplx>(-1, {-1.0, 0.0, 1.0}), zpi);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::divisibility);
  }
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    auto p = random_laurent(rng, -4, 3);
    EXPECT_LT(dist(divide_exact(p * zpi, zpi), p), 1e-12);
  }
}

TEST(ToLambda, Examples) {
  auto q = to_lambda(LaurentPoly<cplx>(-4, {1.0, 0, 0, 0, 0, 0, 0, 0, 1.0}));
  ASSERT_EQ(q.degree(), 2);
  EXPECT_EQ(q.c[0], cplx(-2.0));
  EXPECT_EQ(q.c[1], cplx(0.0));
  EXPECT_EQ(q.c[2], cplx(1.0));
  Rng rng(4);
  for (int i = 0; i < 5; ++i) {
    cplx z = rng.annulus(0.5, 2);
    EXPECT_LT(std::abs(q.eval(z * z + 1.0 / (z * z)) - (std::pow(z, 4) + std::pow(z, -4))), 1e-12);
  }
  auto c = to_lambda(LaurentPoly<cplx>::constant(2.0));
  EXPECT_EQ(c.degree(), 0);
  EXPECT_EQ(c.c[0], cplx(2.0));
  auto l = to_lambda(LaurentPoly<cplx>(-2, {1.0, 0, 0, 0, 1.0}));
  EXPECT_EQ(l.degree(), 1);
  EXPECT_EQ(l.c[1], cplx(1.0));
  EXPECT_THROW(to_lambda(LaurentPoly<cplx>(-1, {1.0, 0.0, 1.0})), Error);
  EXPECT_THROW(to_lambda(LaurentPoly<cplx>(-2, {1.0, 0, 0, 0, 2.0})), Error);
}

TEST(ToLambda, RoundTrip) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    LambdaPoly<cplx> q;
    int d = 1 + t % 6;
    for (int i = 0; i <= d; ++i) q.c.push_back(rng.disk(1.0));
    auto back = to_lambda(from_lambda(q));
    ASSERT_EQ(back.degree(), d);
    for (int i = 0; i <= d; ++i) EXPECT_LT(std::abs(back.c[i] - q.c[i]), 1e-12);
  }
}

TEST(DualCoefficients, CarryGradients) {
  Dual a = Dual::variable(2.0, 0);
  LaurentPoly<Dual> p(-1, {a, Dual(1.0), a * a});
  Dual v = p.eval(2.0);
  // a/2 + 1 + 2 a^2 at a = 2
  EXPECT_NEAR(std::abs(v.v - 10.0), 0.0, 1e-14);
  EXPECT_NEAR(std::abs(v.d[0] - 8.5), 0.0, 1e-14);
}
