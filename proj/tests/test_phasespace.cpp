#include <gtest/gtest.h>

#include <xxzr/phasespace.hpp>

#include "support.hpp"

using namespace xxzr;
using xxzr::testing::random_point;

TEST(Casimir, IdentitySite) { EXPECT_EQ(casimir(SiteState<cplx>{0.0, 0.0, 1.0}), cplx(2.0)); }

TEST(Casimir, ImaginaryK) { EXPECT_NEAR(std::abs(casimir(SiteState<cplx>{0.0, 0.0, cplx(0, 1)}) - 2.0 * -1.0), 0.0, 1e-15); }

TEST(Casimir, DirectFormula) {
  // 4 + 1/4 + 3
  EXPECT_NEAR(std::abs(casimir(SiteState<cplx>{1.0, 3.0, 2.0}) - 7.25), 0.0, 1e-15);
}

TEST(Casimir, ZeroKRejected) {
  EXPECT_THROW(casimir(SiteState<cplx>{1.0, 1.0, 0.0}), Error);
}

TEST(StructureMatrix, IdentitySiteIsZero) {
  EXPECT_EQ(structure_matrix({0.0, 0.0, 1.0}).cwiseAbs().maxCoeff(), 0.0);
}

TEST(StructureMatrix, OnlyEKEntries) {
  auto P = structure_matrix({1.0, 0.0, 1.0});
  EXPECT_EQ(P(0, 2), cplx(-1.0));
  EXPECT_EQ(P(2, 0), cplx(1.0));
  P(0, 2) = P(2, 0) = 0.0;
  EXPECT_EQ(P.cwiseAbs().maxCoeff(), 0.0);
}

TEST(StructureMatrix, Antisymmetric) {
  for (int s = 0; s < 20; ++s) {
    auto x = random_point(1, s);
    auto P = structure_matrix(x.sites[0]);
    EXPECT_LT((P + P.transpose()).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(PoissonBracket, EFAtK2) {
  PhasePoint x{{{0.0, 0.0, 2.0}}};
  auto e = [](const PhasePointT<Dual>& y) { return y.sites[0].e; };
  auto f = [](const PhasePointT<Dual>& y) { return y.sites[0].f; };
  EXPECT_NEAR(std::abs(poisson_bracket(e, f, x) - 7.5), 0.0, 1e-14);
}

namespace {

// Random polynomial observable in the phase variables.
struct PolyObs {
  std::vector<cplx> c;
  Dual operator()(const PhasePointT<Dual>& y) const {
    Dual r(c[0]);
    int i = 1;
    for (auto& s : y.sites) {
      r += c[i++] * s.e * s.k + c[i++] * s.f * s.f + c[i++] * s.k * s.k * s.e;
    }
    return r;
  }
  cplx operator()(const PhasePoint& y) const {
    cplx r(c[0]);
    int i = 1;
    for (auto& s : y.sites) r += c[i++] * s.e * s.k + c[i++] * s.f * s.f + c[i++] * s.k * s.k * s.e;
    return r;
  }
};

PolyObs random_obs(Rng& rng, int N) {
  PolyObs o;
  for (int i = 0; i < 1 + 3 * N; ++i) o.c.push_back(rng.disk(1.0));
  return o;
}

}  // namespace

TEST(PoissonBracket, CasimirIsCentral) {
  Rng rng(3);
  for (int s = 0; s < 10; ++s) {
    auto x = random_point(3, s);
    auto G = random_obs(rng, 3);
    for (int j = 0; j < 3; ++j) {
      auto w = [j](const PhasePointT<Dual>& y) { return casimir(y.sites[j]); };
      EXPECT_LT(std::abs(poisson_bracket(w, G, x)), 1e-10 * (1 + std::abs(G(x))));
      for (int c = 0; c < 3; ++c) {
        auto coord = [j, c](const PhasePointT<Dual>& y) { return c == 0 ? y.sites[j].e : c == 1 ? y.sites[j].f : y.sites[j].k; };
        EXPECT_LT(std::abs(poisson_bracket(w, coord, x)), 1e-10);
      }
    }
  }
}

TEST(PoissonBracket, Antisymmetric) {
  Rng rng(5);
  for (int s = 0; s < 20; ++s) {
    auto x = random_point(2, 100 + s);
    auto F = random_obs(rng, 2), G = random_obs(rng, 2);
    EXPECT_LT(std::abs(poisson_bracket(F, G, x) + poisson_bracket(G, F, x)), 1e-12 * (1 + std::abs(poisson_bracket(F, G, x))));
  }
}

TEST(PoissonBracket, JacobiOnGenerators) {
  for (int s = 0; s < 10; ++s) {
    auto x = random_point(1, 200 + s);
    auto s0 = x.sites[0];
    // {f,k} = k f, {k,e} = k e, {e,f} = 2(k^2 - k^-2)
    auto e = [](const PhasePointT<Dual>& y) { return y.sites[0].e; };
    auto f = [](const PhasePointT<Dual>& y) { return y.sites[0].f; };
    auto k = [](const PhasePointT<Dual>& y) { return y.sites[0].k; };
    auto fk = [](const PhasePointT<Dual>& y) { return y.sites[0].k * y.sites[0].f; };
    auto ke = [](const PhasePointT<Dual>& y) { return y.sites[0].k * y.sites[0].e; };
    auto ef = [](const PhasePointT<Dual>& y) {
      auto k2 = y.sites[0].k * y.sites[0].k;
      return 2.0 * (k2 - 1.0 / k2);
    };
    EXPECT_LT(std::abs(poisson_bracket(f, k, x) - s0.k * s0.f), 1e-12);
    cplx jac = poisson_bracket(e, fk, x) + poisson_bracket(f, ke, x) + poisson_bracket(k, ef, x);
    double sc = std::abs(poisson_bracket(e, fk, x)) + std::abs(poisson_bracket(k, ef, x)) + 1.0;
    EXPECT_LT(std::abs(jac), 1e-10 * sc);
  }
}

TEST(PoissonBracket, BilinearAndLeibniz) {
  Rng rng(11);
  for (int s = 0; s < 10; ++s) {
    auto x = random_point(2, 300 + s);
    auto F = random_obs(rng, 2), G = random_obs(rng, 2), H = random_obs(rng, 2);
    cplx a = rng.disk(1), b = rng.disk(1);
    auto lin = [&](const PhasePointT<Dual>& y) { return a * F(y) + b * G(y); };
    cplx lhs = poisson_bracket(lin, H, x), rhs = a * poisson_bracket(F, H, x) + b * poisson_bracket(G, H, x);
    EXPECT_LT(std::abs(lhs - rhs), 1e-11 * (1 + std::abs(rhs)));
    auto prod = [&](const PhasePointT<Dual>& y) { return F(y) * G(y); };
    lhs = poisson_bracket(prod, H, x);
    rhs = F(x) * poisson_bracket(G, H, x) + G(x) * poisson_bracket(F, H, x);
    EXPECT_LT(std::abs(lhs - rhs), 1e-11 * (1 + std::abs(rhs)));
  }
}

TEST(PoissonBracket, DualMatchesFiniteDifferences) {
  Rng rng(13);
  auto x = random_point(2, 17);
  auto F = random_obs(rng, 2);
  auto gd = gradient(F, x);
  auto gf = gradient_fd([&](const PhasePoint& y) { return F(y); }, x);
  EXPECT_LT((gd - gf).cwiseAbs().maxCoeff(), 1e-7 * (1 + gd.cwiseAbs().maxCoeff()));
}

TEST(SampleLeaf, TrivialLeaf) {
  for (int s = 0; s < 5; ++s) {
    auto x = sample_leaf({2.0, 2.0, 2.0}, s);
    for (auto& site : x.sites) EXPECT_LT(std::abs(casimir(site) - 2.0), 1e-14);
  }
}

TEST(SampleLeaf, Deterministic) {
  auto x = sample_leaf({cplx(1, 2), 3.0}, 42), y = sample_leaf({cplx(1, 2), 3.0}, 42);
  EXPECT_EQ(flatten(x), flatten(y));
}

TEST(SampleLeaf, ComplexTargets) {
  auto x = sample_leaf({cplx(3, 1), 5.0}, 7);
  EXPECT_LT(std::abs(casimir(x.sites[0]) - cplx(3, 1)), 1e-12);
  EXPECT_LT(std::abs(casimir(x.sites[1]) - 5.0), 1e-12);
  for (auto& s : x.sites) {
    EXPECT_GE(std::abs(s.k), 0.5 - 1e-12);
    EXPECT_LE(std::abs(s.k), 2.0 + 1e-12);
  }
}
