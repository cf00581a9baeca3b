#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "curve.hpp"

namespace xxzr {

using Mat2c = Eigen::Matrix2cd;

// The theta value is value * exp(log_factor); the scaled evaluators keep the automorphy
// factor in log_factor so that far-away arguments do not overflow.
struct ThetaEval {
  cplx value{};
  Eigen::VectorXcd grad;
  double abs_sum = 0.0;  // sum of |terms|; |value| / abs_sum is a scale-free smallness measure
  int radius = 0;
  cplx log_factor{};

  double relative() const { return std::abs(value) / std::max(abs_sum, 1e-300); }
  cplx log_value() const { return std::log(value) + log_factor; }
};

// theta(z) = sum_m exp(2 pi i (m, z) + pi i (B m, m)), summed over shells ||m||_inf = R until
// the next shell is below tol of the partial sum. Arguments are first reduced modulo the
// period lattice and the automorphy factor applied afterwards.
class RiemannTheta {
 public:
  RiemannTheta() = default;

  explicit RiemannTheta(Eigen::MatrixXcd B, double tol = 1e-14) : B_(std::move(B)), tol_(tol) {
    g_ = static_cast<int>(B_.rows());
    if (g_ < 1 || B_.cols() != g_) throw Error(ErrorKind::domain, "period matrix must be square with g >= 1");
    if ((B_ - B_.transpose()).cwiseAbs().maxCoeff() > 1e-6 * (1.0 + B_.cwiseAbs().maxCoeff()))
      throw Error(ErrorKind::domain, "period matrix is not symmetric");
    Eigen::MatrixXd Y = 0.5 * (B_.imag() + B_.imag().transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Y);
    if (!(es.eigenvalues().minCoeff() > 0.0)) throw Error(ErrorKind::domain, "Im B is not positive definite");
    y_min_ = es.eigenvalues().minCoeff();
    Y_ = Y;
  }

  int genus() const { return g_; }
  const Eigen::MatrixXcd& period_matrix() const { return B_; }

  ThetaEval eval_scaled(const Eigen::VectorXcd& z, int fixed_radius = 0) const {
    auto red = reduce_lattice(z, B_);
    Eigen::VectorXcd zr = red.reduced;
    ThetaEval t = sum(zr, fixed_radius);
    // theta(zr + B m + n) = exp(-2 pi i (m, zr) - pi i (B m, m)) theta(zr).
    Eigen::VectorXcd m = red.m.cast<cplx>();
    t.log_factor = -2.0 * kPiI * (m.transpose() * zr)(0) - kPiI * (m.transpose() * B_ * m)(0);
    t.grad -= 2.0 * kPiI * m * t.value;
    return t;
  }

  ThetaEval eval(const Eigen::VectorXcd& z, int fixed_radius = 0) const { return unscale(eval_scaled(z, fixed_radius)); }

  cplx operator()(const Eigen::VectorXcd& z) const { return eval(z).value; }

  // Theta with half-integer characteristic [a; b]:
  // exp(pi i (a, B a) + 2 pi i (a, z + b)) theta(z + B a + b).
  ThetaEval eval_char_scaled(const Eigen::VectorXcd& z, const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    Eigen::VectorXcd ac = a.cast<cplx>(), bc = b.cast<cplx>();
    ThetaEval t = eval_scaled(z + B_ * ac + bc);
    t.log_factor += kPiI * (ac.transpose() * B_ * ac)(0) + 2.0 * kPiI * (ac.transpose() * (z + bc))(0);
    t.grad += 2.0 * kPiI * ac * t.value;
    return t;
  }

  ThetaEval eval_char(const Eigen::VectorXcd& z, const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
    return unscale(eval_char_scaled(z, a, b));
  }

  static ThetaEval unscale(ThetaEval t) {
    cplx f = std::exp(t.log_factor);
    t.value *= f;
    t.grad *= f;
    t.abs_sum *= std::abs(f);
    t.log_factor = 0.0;
    return t;
  }

 private:
  static constexpr cplx kPiI{0.0, std::numbers::pi};

  template <class Fn>
  void shell(int R, Fn&& fn) const {
    std::vector<int> m(g_, -R);
    while (true) {
      int mx = 0;
      for (int v : m) mx = std::max(mx, std::abs(v));
      if (mx == R) fn(m);
      int i = 0;
      while (i < g_ && m[i] == R) m[i++] = -R;
      if (i == g_) break;
      ++m[i];
    }
  }

  ThetaEval sum(const Eigen::VectorXcd& z, int fixed_radius) const {
    ThetaEval t;
    t.grad = Eigen::VectorXcd::Zero(g_);
    // The Gaussian weight peaks at m = -Y^{-1} Im z; shells must reach past it.
    Eigen::VectorXd c = -Y_.ldlt().solve(Eigen::VectorXd(z.imag()));
    int rmin = static_cast<int>(std::ceil(c.cwiseAbs().maxCoeff())) + 1;
    Eigen::VectorXcd mv(g_);
    for (int R = 0;; ++R) {
      cplx sv = 0.0;
      Eigen::VectorXcd sg = Eigen::VectorXcd::Zero(g_);
      double sa = 0.0;
      shell(R, [&](const std::vector<int>& m) {
        for (int i = 0; i < g_; ++i) mv[i] = double(m[i]);
        cplx e = std::exp(2.0 * kPiI * (mv.transpose() * z)(0) + kPiI * (mv.transpose() * B_ * mv)(0));
        sv += e;
        sg += 2.0 * kPiI * mv * e;
        sa += std::abs(e);
      });
      t.value += sv;
      t.grad += sg;
      t.abs_sum += sa;
      t.radius = R;
      if (fixed_radius > 0) {
        if (R >= fixed_radius) break;
        continue;
      }
      if (R >= rmin && sa < tol_ * t.abs_sum) break;
      if (R > 60) throw Error(ErrorKind::theta, "theta series did not converge (Im B too small)");
    }
    return t;
  }

  Eigen::MatrixXcd B_;
  Eigen::MatrixXd Y_;
  double tol_ = 1e-14, y_min_ = 0.0;
  int g_ = 0;
};

// Odd non-singular half period e = B a + b, a, b in {0, 1/2}^g with 4 (a, b) odd.
struct OddPoint {
  Eigen::VectorXd a, b;
  Eigen::VectorXcd e;
  double value_residual = 0.0;  // |theta(e)| relative to the theta scale nearby
  double grad_norm = 0.0;
  int index = 0;                // position in the lexicographic order of characteristics
};

inline OddPoint odd_point(const RiemannTheta& th) {
  int g = th.genus();
  int count = 1 << (2 * g);
  for (int code = 0; code < count; ++code) {
    // Digits (a_1..a_g, b_1..b_g), most significant first.
    Eigen::VectorXd a(g), b(g);
    for (int i = 0; i < g; ++i) {
      a[i] = 0.5 * ((code >> (2 * g - 1 - i)) & 1);
      b[i] = 0.5 * ((code >> (g - 1 - i)) & 1);
    }
    long dot = std::lround(4.0 * a.dot(b));
    if (dot % 2 == 0) continue;
    Eigen::VectorXcd e = th.period_matrix() * a.cast<cplx>() + b.cast<cplx>();
    auto t = th.eval(e);
    double scale = 0.0;
    for (int i = 0; i < g; ++i)
      for (double s : {-0.1, 0.1}) {
        Eigen::VectorXcd d = Eigen::VectorXcd::Zero(g);
        d[i] = s;
        scale = std::max(scale, std::abs(th(e + d)));
      }
    OddPoint op{a, b, e, std::abs(t.value) / std::max(scale, 1e-300), t.grad.norm(), code};
    if (op.value_residual < 1e-8 && op.grad_norm > 1e-4) return op;
  }
  throw Error(ErrorKind::degenerate, "no odd non-singular half period (curve degeneracy)");
}

inline ThetaEval theta_odd(const RiemannTheta& th, const OddPoint& op, const Eigen::VectorXcd& z) {
  return th.eval_char(z, op.a, op.b);
}

inline ThetaEval theta_odd_scaled(const RiemannTheta& th, const OddPoint& op, const Eigen::VectorXcd& z) {
  return th.eval_char_scaled(z, op.a, op.b);
}

// ---- Riemann constant ----

struct KSolve {
  Eigen::VectorXcd K;
  int seed = -1, iterations = 0;
  double divisor_residual = 0.0;     // max relative |theta(A(p_i) - A(D) - K)| over the solve divisor
  double validation_residual = 0.0;  // same on the independent divisor D'
  double probe_minimum = 0.0;        // min relative |theta| at probes off D'
};

namespace detail {

// Deterministic generic points on the curve: a ring around the coordinate-wise median of the
// branch points, with the median branch-point distance as unit (robust to outlying branch points).
inline std::vector<CurvePoint> ring_points(const SpectralCurve& c, int n, double radius, double phase) {
  const auto& br = c.hc.branch_points();
  std::vector<double> re, im;
  for (auto b : br) {
    re.push_back(b.real());
    im.push_back(b.imag());
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
  };
  cplx centre(median(re), median(im));
  std::vector<double> dist;
  for (auto b : br) dist.push_back(std::abs(b - centre));
  double unit = std::max(median(dist), 1e-3 * c.hc.scale());
  std::vector<CurvePoint> out;
  for (int k = 0; k < n; ++k) {
    cplx lam = centre + 2.0 * radius * unit * std::exp(cplx(0.0, phase + 2.3 * k));
    cplx y = c.y1(lam);
    out.push_back({lam, k % 2 ? -y : y, 0});
  }
  return out;
}

inline Eigen::VectorXcd sum_vectors(const std::vector<Eigen::VectorXcd>& v, int g) {
  Eigen::VectorXcd s = Eigen::VectorXcd::Zero(g);
  for (auto& x : v) s += x;
  return s;
}

}  // namespace detail

inline std::vector<Eigen::VectorXcd> abel_points(const SpectralCurve& curve, const PeriodData& pd,
                                                 const std::vector<CurvePoint>& pts) {
  std::vector<Eigen::VectorXcd> out;
  for (auto& p : pts) out.push_back(abel_point(curve, pd, p));
  return out;
}

// Largest relative |theta(A(p_i) - A(D) - K)| over the points of D.
inline double divisor_vanishing(const RiemannTheta& th, const std::vector<Eigen::VectorXcd>& apts,
                                const Eigen::VectorXcd& K) {
  Eigen::VectorXcd ad = detail::sum_vectors(apts, th.genus());
  double r = 0.0;
  for (auto& a : apts) r = std::max(r, th.eval(a - ad - K).relative());
  return r;
}

// Newton on theta(A(p_i) - A(D) - K) = 0 (i = 1..g) from half-period seeds; each candidate
// is validated on an independent divisor D' and at probe points off D'.
inline KSolve riemann_constant(const RiemannTheta& th, const SpectralCurve& curve, const PeriodData& pd,
                               const std::vector<CurvePoint>& D) {
  int g = th.genus();
  if (static_cast<int>(D.size()) != g) throw Error(ErrorKind::k_solve, "divisor must have g points");
  auto apts = abel_points(curve, pd, D);
  Eigen::VectorXcd ad = detail::sum_vectors(apts, g);
  auto vpts = abel_points(curve, pd, detail::ring_points(curve, g, 0.37, 1.1));
  Eigen::VectorXcd vd = detail::sum_vectors(vpts, g);
  auto probes = abel_points(curve, pd, detail::ring_points(curve, 5, 0.55, 0.4));
  const auto& B = th.period_matrix();
  bool any_converged = false;
  int count = 1 << (2 * g);
  for (int code = 0; code < count; ++code) {
    Eigen::VectorXd a(g), b(g);
    for (int i = 0; i < g; ++i) {
      a[i] = 0.5 * ((code >> (2 * g - 1 - i)) & 1);
      b[i] = 0.5 * ((code >> (g - 1 - i)) & 1);
    }
    Eigen::VectorXcd K = B * a.cast<cplx>() + b.cast<cplx>();
    bool ok = false;
    int it = 0;
    for (; it < 40; ++it) {
      Eigen::VectorXcd F(g);
      Eigen::MatrixXcd J(g, g);
      double res = 0.0;
      for (int i = 0; i < g; ++i) {
        auto t = th.eval(apts[i] - ad - K);
        double s = std::max(t.abs_sum, 1e-300);
        F[i] = t.value / s;
        J.row(i) = -t.grad.transpose() / s;
        res = std::max(res, std::abs(F[i]));
      }
      if (res < 1e-12) {
        ok = true;
        break;
      }
      Eigen::FullPivLU<Eigen::MatrixXcd> lu(J);
      if (lu.rank() < g) break;
      Eigen::VectorXcd step = -lu.solve(F);
      double damp = std::min(1.0, 0.5 / std::max(step.cwiseAbs().maxCoeff(), 1e-300));
      K += damp * step;
      if (damp == 1.0 && step.norm() < 1e-13 * (1.0 + K.norm())) {
        ok = res < 1e-8;
        break;
      }
    }
    if (!ok) continue;
    any_converged = true;
    K = reduce_lattice(K, B).reduced;
    KSolve ks;
    ks.K = K;
    ks.seed = code;
    ks.iterations = it;
    ks.divisor_residual = divisor_vanishing(th, apts, K);
    ks.validation_residual = 0.0;
    for (auto& v : vpts) ks.validation_residual = std::max(ks.validation_residual, th.eval(v - vd - K).relative());
    ks.probe_minimum = 1e300;
    for (auto& q : probes) ks.probe_minimum = std::min(ks.probe_minimum, th.eval(q - vd - K).relative());
    if (ks.validation_residual < 1e-7 && ks.probe_minimum > 1e-2) return ks;
  }
  if (!any_converged) throw Error(ErrorKind::k_solve, "Newton for the Riemann constant failed from all seeds");
  throw Error(ErrorKind::special_divisor, "no Riemann constant candidate passed validation (special divisor?)");
}

// ---- Context: theta data of a curve with its divisor at t = 0 ----

struct ThetaContext {
  SpectralCurve curve;
  PeriodData pd;
  RiemannTheta theta;
  OddPoint odd;
  KSolve k;
  Eigen::VectorXcd a_minus, a_plus, a_q;  // Abel images of oo-, oo+ (= a_minus + Delta), q+ (= a_minus - W)
  std::vector<Eigen::VectorXcd> divisor_points;  // normalized Abel images of D(0)
  Eigen::VectorXcd a_divisor;                    // their sum
  cplx q0{};                                     // Q at t = 0

  int genus() const { return pd.g; }
  const Eigen::VectorXcd& K() const { return k.K; }
};

inline ThetaContext make_theta_context(const SpectralCurve& curve, const PeriodData& pd, const SovChart& chart0) {
  ThetaContext ctx;
  ctx.curve = curve;
  ctx.pd = pd;
  ctx.theta = RiemannTheta(pd.riemann);
  ctx.odd = odd_point(ctx.theta);
  auto D = divisor_of(chart0);
  ctx.k = riemann_constant(ctx.theta, curve, pd, D);
  ctx.a_minus = abel_point(curve, pd, {0.0, 0.0, -1});
  // The B-periods of d omega_N and of Omega_{oo-,q+} fix the representatives of
  // A(oo+) - A(oo-) and A(oo-) - A(q+) consistently with those differentials.
  ctx.a_plus = ctx.a_minus + pd.delta;
  ctx.a_q = ctx.a_minus - pd.W;
  ctx.divisor_points = abel_points(curve, pd, D);
  ctx.a_divisor = detail::sum_vectors(ctx.divisor_points, pd.g);
  ctx.q0 = chart0.bigQ;
  return ctx;
}

// Q(t) under the flow of P_k from the theta formula.
inline cplx q_evolution(const ThetaContext& ctx, int k, double t) {
  const auto& th = ctx.theta;
  Eigen::VectorXcd U = ctx.pd.U(k);
  Eigen::VectorXcd base = ctx.a_divisor + ctx.K();
  auto n1 = th.eval_scaled(ctx.a_plus - base - t * U), n2 = th.eval_scaled(ctx.a_minus - base);
  auto d1 = th.eval_scaled(ctx.a_minus - base - t * U), d2 = th.eval_scaled(ctx.a_plus - base);
  for (auto* d : {&d1, &d2})
    if (d->relative() < 1e-12) throw Error(ErrorKind::evaluation, "theta vanishes in a denominator (divisor at infinity)");
  cplx lf = ctx.pd.c[k - 1] * t + n1.log_factor + n2.log_factor - d1.log_factor - d2.log_factor;
  return ctx.q0 * std::exp(lf) * n1.value * n2.value / (d1.value * d2.value);
}

// Q(t) from tracked divisor points: product over p_j of odd-theta ratios. Abel images must be
// continued continuously from t = 0 (see unwrap_abel).
inline cplx q_from_tracked(const ThetaContext& ctx, int k, double t, const std::vector<Eigen::VectorXcd>& a0,
                           const std::vector<Eigen::VectorXcd>& at) {
  const auto& th = ctx.theta;
  cplx r = ctx.q0 * std::exp(ctx.pd.c[k - 1] * t);
  for (std::size_t j = 0; j < a0.size(); ++j) {
    auto n1 = theta_odd_scaled(th, ctx.odd, ctx.a_plus - at[j]), n2 = theta_odd_scaled(th, ctx.odd, ctx.a_minus - a0[j]);
    auto d1 = theta_odd_scaled(th, ctx.odd, ctx.a_plus - a0[j]), d2 = theta_odd_scaled(th, ctx.odd, ctx.a_minus - at[j]);
    r *= std::exp(n1.log_factor + n2.log_factor - d1.log_factor - d2.log_factor) * n1.value * n2.value / (d1.value * d2.value);
  }
  return r;
}

// Continues per-point Abel images along a sampled track by removing lattice jumps.
inline std::vector<std::vector<Eigen::VectorXcd>> unwrap_abel(const std::vector<std::vector<Eigen::VectorXcd>>& samples,
                                                             const Eigen::MatrixXcd& B) {
  auto out = samples;
  for (std::size_t i = 1; i < out.size(); ++i)
    for (std::size_t j = 0; j < out[i].size(); ++j) {
      Eigen::VectorXcd d = out[i][j] - out[i - 1][j];
      out[i][j] = out[i - 1][j] + reduce_lattice(d, B).reduced;
    }
  return out;
}

// rho = (y + h) / ((P + 1/P)(lambda + 2) prod (lambda - lambda_k)) from monodromy data.
inline cplx rho_rational(const SpectralCurve& curve, const SovChart& chart, const CurvePoint& p) {
  cplx z = std::sqrt(detail::small_root_w(p.lam));
  cplx h = curve.h_at(z);
  cplx den = curve.p_sum() * (p.lam + 2.0);
  for (auto l : chart.lambdas) den *= p.lam - l;
  return (p.y + h) / den;
}

// Limit of rho_rational at oo+ (sheet 1) or oo- (sheet -1). Outside the branch points rho is
// analytic in 1/lambda on each sheet, so the value at infinity is its mean over a circle.
inline cplx rho_at_infinity(const SpectralCurve& curve, const SovChart& chart, int sheet, int samples = 64) {
  double R = 4.0 * std::max(1.0, curve.hc.scale());
  for (auto l : chart.lambdas) R = std::max(R, 4.0 * std::abs(l));
  cplx sum = 0.0;
  for (int i = 0; i < samples; ++i) {
    cplx lam = R * std::exp(cplx(0.0, 2.0 * std::numbers::pi * (i + 0.5) / samples));
    sum += rho_rational(curve, chart, {lam, double(sheet) * curve.y1(lam), 0});
  }
  return sum / double(samples);
}

// rho from theta functions, for a divisor with Abel image a_div, at a point with Abel image ap.
inline cplx rho_theta(const ThetaContext& ctx, const Eigen::VectorXcd& a_div, const Eigen::VectorXcd& ap) {
  const auto& th = ctx.theta;
  const auto& W = ctx.pd.W;
  Eigen::VectorXcd base = a_div + ctx.K();
  std::array<ThetaEval, 8> v{theta_odd_scaled(th, ctx.odd, ap - ctx.a_minus), th.eval_scaled(ap - base + W),
                             theta_odd_scaled(th, ctx.odd, ctx.a_plus - ctx.a_q), th.eval_scaled(ctx.a_plus - base),
                             theta_odd_scaled(th, ctx.odd, ap - ctx.a_q), th.eval_scaled(ap - base),
                             theta_odd_scaled(th, ctx.odd, ctx.a_plus - ctx.a_minus), th.eval_scaled(ctx.a_plus - base + W)};
  cplx r = 1.0, lf = 0.0;
  for (int i = 0; i < 8; ++i) {
    r = i < 4 ? r * v[i].value : r / v[i].value;
    lf += i < 4 ? v[i].log_factor : -v[i].log_factor;
  }
  return std::exp(lf) * r;
}

inline cplx rho_evolved(const ThetaContext& ctx, int k, double t, const Eigen::VectorXcd& ap) {
  return rho_theta(ctx, ctx.a_divisor + t * ctx.pd.U(k), ap);
}

// T(z, t) = V diag(zeta+, zeta-) V^{-1} with eigenvectors psi = (1, Q / ((P + 1/P)(z + 1/z) rho)).
inline Mat2c reconstruct_monodromy(const ThetaContext& ctx, int k, double t, cplx z) {
  const auto& c = ctx.curve;
  if (!c.data) throw Error(ErrorKind::reconstruction, "curve carries no monodromy data");
  cplx lam = z * z + 1.0 / (z * z);
  cplx y = c.y1(lam);
  cplx tz = c.data->transfer(z);
  if (std::abs(y) < 1e-10 * (1.0 + std::abs(tz))) throw Error(ErrorKind::reconstruction, "coincident eigenvalues (branch point in z)");
  cplx qt = q_evolution(ctx, k, t);
  Mat2c V;
  Eigen::Vector2cd zeta;
  for (int s = 0; s < 2; ++s) {
    cplx ys = s == 0 ? y : -y;
    auto ap = abel_point(c, ctx.pd, {lam, ys, 0});
    cplx rho = rho_evolved(ctx, k, t, ap);
    V(0, s) = 1.0;
    V(1, s) = qt / (c.p_sum() * (z + 1.0 / z) * rho);
    zeta[s] = tz + ys;
  }
  return V * zeta.asDiagonal() * V.inverse();
}

// m(p) = prod_j theta_e(A(p) - A(p_j)) / theta_e(A(p) - A(q_j))
//        * theta(A(p) - A(D') - K) / theta(A(p) - A(D) - K), constant in p.
inline cplx cross_ratio_function(const ThetaContext& ctx, const std::vector<Eigen::VectorXcd>& d,
                                 const std::vector<Eigen::VectorXcd>& dp, const Eigen::VectorXcd& ap) {
  const auto& th = ctx.theta;
  cplx r = 1.0;
  for (std::size_t j = 0; j < d.size(); ++j)
    r *= theta_odd(th, ctx.odd, ap - d[j]).value / theta_odd(th, ctx.odd, ap - dp[j]).value;
  int g = ctx.genus();
  return r * th(ap - detail::sum_vectors(dp, g) - ctx.K()) / th(ap - detail::sum_vectors(d, g) - ctx.K());
}

// h(-2)^2 against Q(-2) and the closed forms.
struct H2Check {
  cplx h2{}, q_minus2{}, reading_linear{}, reading_squared{}, derived{};
  double q_residual = 0, linear_residual = 0, squared_residual = 0, derived_residual = 0;
};

inline H2Check h2_readings(const SpectralCurve& c) {
  H2Check r;
  cplx h = c.h_at(cplx(0.0, 1.0));
  r.h2 = h * h;
  r.q_minus2 = c.hc.q(-2.0);
  cplx prod = 1.0;
  for (int k = 0; k < c.N(); ++k) {
    cplx a2 = c.params.a[k] * c.params.a[k];
    prod *= c.leaf[k] + a2 + 1.0 / a2;
  }
  cplx xi = c.params.xi;
  r.reading_linear = (xi - 1.0 / xi) / 4.0 * prod * prod;
  r.reading_squared = std::pow((xi - 1.0 / xi) / 4.0, 2) * prod * prod;
  r.derived = std::pow((xi + 1.0 / xi) / 2.0, 2) * prod * prod;
  auto rel = [&](cplx v) { return std::abs(v - r.h2) / std::max(1.0, std::abs(r.h2)); };
  r.q_residual = rel(r.q_minus2);
  r.linear_residual = rel(r.reading_linear);
  r.squared_residual = rel(r.reading_squared);
  r.derived_residual = rel(r.derived);
  return r;
}

}  // namespace xxzr
