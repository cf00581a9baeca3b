#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hyperelliptic.hpp"
#include "monodromy.hpp"
#include "sov.hpp"

namespace xxzr {

// Q_{2N} from the reflection Hamiltonians on a fixed leaf:
// (z - 1/z)^2 Q = S(z)^2 (z + 1/z)^2 - det K prod det L, S = P_0/2 + sum_j P_j (w^j + w^-j)/4.
inline LambdaPoly<cplx> spectral_polynomial_from(const ModelParams& p, const std::vector<cplx>& leaf,
                                                 const std::vector<cplx>& P) {
  int N = p.N;
  std::vector<cplx> s(4 * N + 1, 0.0);
  s[2 * N] = P[0] / 2.0;
  for (int j = 1; j <= N; ++j) {
    s[2 * N + 2 * j] += P[j] / 4.0;
    s[2 * N - 2 * j] += P[j] / 4.0;
  }
  LaurentPoly<cplx> S(-2 * N, s);
  auto zp = z_plus_inv(), zm = z_minus_inv();
  cplx xi = p.xi;
  LaurentPoly<cplx> det = LaurentPoly<cplx>(-1, {-1.0 / xi, 0.0, xi}) * LaurentPoly<cplx>(-1, {xi, 0.0, -1.0 / xi});
  for (int j = 0; j < N; ++j) {
    cplx a = p.a[j];
    cplx b = p.ordering == OrderingMode::reversed ? p.a[j] : p.a[N - 1 - j];
    det = det * LaurentPoly<cplx>(-2, {1.0 / (a * a), 0.0, -leaf[j], 0.0, a * a});
    det = det * LaurentPoly<cplx>(-2, {b * b, 0.0, -leaf[j], 0.0, 1.0 / (b * b)});
  }
  auto num = S * S * zp * zp - det;
  return to_lambda(divide_exact(divide_exact(num, zm), zm));
}

// Reflection Hamiltonians with the sum rule sum_j P_j = (xi - 1/xi) prod_k (omega_k - a_k^2 - a_k^-2).
inline cplx sum_rule_total(const ModelParams& p, const std::vector<cplx>& leaf) {
  cplx r = p.xi - 1.0 / p.xi;
  for (int k = 0; k < p.N; ++k) r *= leaf[k] - p.a[k] * p.a[k] - 1.0 / (p.a[k] * p.a[k]);
  return r;
}

// Gamma: y^2 = Q_{2N}(lambda) together with the chain data it came from.
struct SpectralCurve {
  ModelParams params;
  std::vector<cplx> leaf;
  std::vector<cplx> hamiltonians;
  cplx bigP{};
  LambdaPoly<cplx> q2n;
  HyperellipticCurve hc;
  std::optional<ReflectionData<cplx>> data;

  int N() const { return params.N; }
  int genus() const { return params.N - 1; }
  cplx p_sum() const { return bigP + 1.0 / bigP; }
  cplx y1(cplx lam) const { return hc.y1(lam); }
  // Sigma: y^2 = Q~(w) = Q_{2N}(w + 1/w), sheet inherited from Gamma.
  cplx y_sigma(cplx w) const { return hc.y1(w + 1.0 / w); }

  // t as a function of w = z^2.
  cplx transfer_w(cplx w) const {
    cplx s = hamiltonians[0];
    for (int j = 1; j <= N(); ++j) s += hamiltonians[j] * (std::pow(w, j) + std::pow(w, -j)) / 2.0;
    return 0.5 * (w + 1.0) / (w - 1.0) * s;
  }

  // h = (A - D)/2 at z.
  cplx h_at(cplx z) const {
    if (!data) throw Error(ErrorKind::evaluation, "curve carries no monodromy data");
    return (data->A(z) - data->D(z)) / 2.0;
  }

  // lambda-values where det T vanishes; zeta = t + y vanishes on one sheet above them.
  std::vector<cplx> det_zeros() const {
    std::vector<cplx> out;
    cplx xi = params.xi;
    out.push_back(xi * xi + 1.0 / (xi * xi));
    for (int j = 0; j < N(); ++j) {
      cplx a = params.a[j];
      cplx b = params.ordering == OrderingMode::reversed ? params.a[j] : params.a[N() - 1 - j];
      cplx s = std::sqrt(leaf[j] * leaf[j] - 4.0);
      for (cplx u : {(leaf[j] + s) / 2.0, (leaf[j] - s) / 2.0}) {
        cplx w1 = u / (a * a), w2 = u * b * b;
        out.push_back(w1 + 1.0 / w1);
        out.push_back(w2 + 1.0 / w2);
      }
    }
    return out;
  }
};

namespace detail {

inline SpectralCurve finish_curve(SpectralCurve c) {
  int N = c.params.N;
  if (c.q2n.degree() != 2 * N || std::abs(c.q2n.leading()) == 0.0)
    throw Error(ErrorKind::construction, "Q_2N does not have degree 2N");
  cplx lead = c.p_sum() / 2.0;
  // The leading coefficient comes out of cancellations among coefficients that can be far larger.
  double big = 0.0;
  for (auto v : c.q2n.c) big = std::max(big, std::abs(v));
  if (std::abs(c.q2n.leading() - lead * lead) > 1e-9 * std::max(1.0, std::abs(lead * lead)) + 1e-13 * big)
    throw Error(ErrorKind::construction, "leading coefficient of Q_2N differs from ((P + 1/P)/2)^2");
  std::vector<cplx> q = c.q2n.c;
  q.back() = lead * lead;
  c.hc = HyperellipticCurve(q, lead);
  return c;
}

}  // namespace detail

inline SpectralCurve curve_from_point(const PhasePoint& x, const ModelParams& p) {
  SpectralCurve c;
  c.params = p;
  c.data = reflection_monodromy(x, p);
  c.leaf = c.data->leaf;
  c.hamiltonians = c.data->hamiltonians;
  c.bigP = c.data->bigP;
  c.q2n = spectral_polynomial(c.data->numerator);
  return detail::finish_curve(std::move(c));
}

// Curve of the chain with prescribed Hamiltonians P_1..P_N on a leaf; P_0 follows from the sum rule
// and P from P_N/2 = P - 1/P (root closest to p_hint).
inline SpectralCurve curve_from_hamiltonians(const ModelParams& p, const std::vector<cplx>& leaf,
                                             std::vector<cplx> P, cplx p_hint) {
  SpectralCurve c;
  c.params = p;
  c.leaf = leaf;
  cplx rest = 0.0;
  for (int j = 1; j <= p.N; ++j) rest += P[j];
  P[0] = sum_rule_total(p, leaf) - rest;
  c.hamiltonians = P;
  cplx h = P[p.N] / 4.0, s = std::sqrt(h * h + 1.0);
  cplx r1 = h + s, r2 = h - s;
  c.bigP = std::abs(r1 - p_hint) <= std::abs(r2 - p_hint) ? r1 : r2;
  c.q2n = spectral_polynomial_from(p, leaf, P);
  return detail::finish_curve(std::move(c));
}

// r_j = (q_j - 2)/(lambda - 2).
inline LambdaPoly<cplx> r_poly(int j) {
  auto q = chebyshev_q(j);
  q.c[0] -= 2.0;
  int n = q.degree();
  std::vector<cplx> out(std::max(n, 1), 0.0);
  cplx carry = 0.0;
  for (int i = n; i >= 1; --i) {
    carry = q.c[i] + 2.0 * carry;
    out[i - 1] = carry;
  }
  return {out};
}

// Numerators of Omega_1..Omega_{N-1} (r_j/8) and Omega_N (-(P + 1/P) r_N / 2) against dlambda / y.
inline Numerators omega_numerators(const SpectralCurve& c) {
  int N = c.N();
  std::vector<LambdaPoly<cplx>> r;
  for (int j = 1; j <= N; ++j) r.push_back(r_poly(j));
  cplx ps = c.p_sum();
  return [r, N, ps](cplx lam) {
    Eigen::VectorXcd v(N);
    for (int j = 0; j < N; ++j) v[j] = r[j].eval(lam) * (j + 1 < N ? 1.0 / 8.0 : -ps / 2.0);
    return v;
  };
}

// Omega_j and Omega_N in the w-chart, as coefficients of dw at (w, y).
inline Eigen::VectorXcd omega_w(const SpectralCurve& c, cplx w, cplx y) {
  int N = c.N();
  Eigen::VectorXcd v(N);
  for (int j = 1; j <= N; ++j) {
    cplx base = (w + 1.0) / (w - 1.0) * (std::pow(w, j) + std::pow(w, -j) - 2.0) / (y * w);
    v[j - 1] = j < N ? base / 8.0 : -c.p_sum() * base / 2.0;
  }
  return v;
}

// The tau-even and tau-odd holomorphic differentials on Sigma, as coefficients of dw.
struct SigmaForms {
  Eigen::VectorXcd plus, minus;
};

inline SigmaForms sigma_forms(int N, cplx w, cplx y) {
  SigmaForms f;
  f.plus.resize(std::max(N - 1, 0));
  f.minus.resize(N);
  for (int j = 0; j + 2 <= N; ++j) f.plus[j] = (w - 1.0 / w) * (std::pow(w, j) + std::pow(w, -j)) / (y * w);
  for (int k = 0; k < N; ++k) f.minus[k] = (std::pow(w, k) + std::pow(w, -k)) / (y * w);
  return f;
}

// Pullback by tau(w, y) = (1/w, y): coefficients of dw at (w, y).
inline SigmaForms sigma_forms_pulled_back(int N, cplx w, cplx y) {
  auto f = sigma_forms(N, 1.0 / w, y);
  f.plus *= -1.0 / (w * w);
  f.minus *= -1.0 / (w * w);
  return f;
}

// Residue of n dlambda / y at infinity on the given sheet, from a large circle.
inline Eigen::VectorXcd residue_at_infinity(const HyperellipticCurve& C, const Numerators& f, int sheet) {
  double R = 4.0 * C.scale() + 4.0;
  VecFn g = [&](double th) -> Eigen::VectorXcd {
    cplx lam = std::polar(R, -th);
    cplx dl = cplx(0.0, -1.0) * lam;
    return f(lam) * (dl / (double(sheet) * C.y1(lam)));
  };
  // A clockwise circle in lambda is a positive loop around the point at infinity.
  return integrate_adaptive(g, 0.0, 2.0 * std::numbers::pi, 1e-14, 1e-13) / (2.0 * std::numbers::pi * cplx(0.0, 1.0));
}

struct PeriodData {
  int N = 0, g = 0;
  Eigen::MatrixXcd a_periods;   // N x N: rows A_1..A_g and gamma/(2 pi i); columns Omega_1..Omega_N
  Eigen::MatrixXcd b_periods;   // g x N
  Eigen::MatrixXcd norm_hol;    // g x g: d omega_j = sum_k norm_hol_jk Omega_k
  Eigen::VectorXcd nu;          // d omega_N = Omega_N + sum_k nu_k Omega_k
  Eigen::MatrixXcd norm;        // N x N with c_k = 4 (P + 1/P) norm_Nk
  Eigen::MatrixXcd riemann;     // g x g period matrix of d omega
  Eigen::VectorXcd delta;       // (1/2 pi i) B-periods of d omega_N
  Eigen::VectorXcd c;           // c_1..c_N
  Eigen::VectorXcd W;           // (1/2 pi i) B-periods of Omega_{oo-, q+}
  Eigen::VectorXcd w_coeffs;    // R(lambda) of Omega_{oo-, q+}
  cplx q_plus_y{};              // y at q+ = (-2, h(-2))
  double symmetry_residual = 0, normalization_residual = 0, residue_residual = 0, w_normalization_residual = 0,
         w_residue_residual = 0;
  double min_imag_eigenvalue = 0;
  QuadStats stats;

  Eigen::VectorXcd U(int k) const {
    Eigen::VectorXcd u(g);
    for (int j = 0; j < g; ++j) u[j] = norm(j, k - 1);
    return u;
  }
};

namespace detail {

inline Eigen::VectorXcd polyvals(cplx lam, int n) {
  Eigen::VectorXcd v(n);
  cplx p = 1.0;
  for (int i = 0; i < n; ++i) {
    v[i] = p;
    p *= lam;
  }
  return v;
}

}  // namespace detail

inline PeriodData periods(const SpectralCurve& curve, const HomologyBasis& hb, double tol = 1e-11) {
  const auto& C = curve.hc;
  int N = curve.N(), g = curve.genus();
  if (g < 1) throw Error(ErrorKind::domain, "periods need genus >= 1");
  bool with_w = curve.data.has_value();
  int m = N + (with_w ? N + 1 : 0);
  auto om = omega_numerators(curve);
  Numerators f = [&](cplx lam) {
    Eigen::VectorXcd v(m);
    v.head(N) = om(lam);
    if (with_w) v.tail(N + 1) = detail::polyvals(lam, N + 1) / (lam + 2.0);
    return v;
  };
  auto rp = raw_periods(C, hb, f, m, tol);
  PeriodData pd;
  pd.N = N;
  pd.g = g;
  pd.stats = rp.stats;
  pd.a_periods = Eigen::MatrixXcd::Zero(N, N);
  pd.a_periods.topRows(g) = rp.A.leftCols(N);
  pd.a_periods(g, N - 1) = 1.0;
  pd.b_periods = rp.B.leftCols(N);
  Eigen::MatrixXcd Ah = rp.A.leftCols(g);
  pd.norm_hol = Ah.transpose().inverse();
  pd.nu = -Ah.partialPivLu().solve(rp.A.col(N - 1));
  cplx ps = curve.p_sum();
  pd.norm = Eigen::MatrixXcd::Zero(N, N);
  pd.norm.topLeftCorner(g, g) = pd.norm_hol;
  for (int k = 0; k < g; ++k) pd.norm(g, k) = -pd.nu[k] / (4.0 * ps);
  pd.norm(g, g) = 1.0;
  pd.c.resize(N);
  for (int k = 0; k < N; ++k) pd.c[k] = 4.0 * ps * pd.norm(g, k);
  pd.riemann = rp.B.leftCols(g) * pd.norm_hol.transpose();
  const cplx two_pi_i(0.0, 2.0 * std::numbers::pi);
  pd.delta = (rp.B.col(N - 1) + rp.B.leftCols(g) * pd.nu) / two_pi_i;

  pd.symmetry_residual = (pd.riemann - pd.riemann.transpose()).cwiseAbs().maxCoeff();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(pd.riemann.imag());
  pd.min_imag_eigenvalue = es.eigenvalues().minCoeff();
  Eigen::MatrixXcd id = Ah * pd.norm_hol.transpose();
  pd.normalization_residual = (id - Eigen::MatrixXcd::Identity(g, g)).cwiseAbs().maxCoeff();
  Eigen::VectorXcd an = rp.A.col(N - 1) + Ah * pd.nu;
  pd.normalization_residual = std::max(pd.normalization_residual, an.cwiseAbs().maxCoeff());
  auto res_p = residue_at_infinity(C, om, 1), res_m = residue_at_infinity(C, om, -1);
  pd.residue_residual = std::max(std::abs(res_p[N - 1] - 1.0), std::abs(res_m[N - 1] + 1.0));
  for (int k = 0; k < g; ++k) pd.residue_residual = std::max({pd.residue_residual, std::abs(res_p[k]), std::abs(res_m[k])});
  if (!(pd.min_imag_eigenvalue > 0.0)) throw Error(ErrorKind::period, "Im B is not positive definite");

  if (with_w) {
    // Omega_{oo-, q+} = -dlambda / (2 (lambda + 2)) + R(lambda) dlambda / ((lambda + 2) y),
    // with R(-2) = -y_q/2, leading coefficient (P + 1/P)/4 and vanishing A-periods.
    cplx yq = curve.h_at(cplx(0.0, 1.0));
    pd.q_plus_y = yq;
    cplx rN = ps / 4.0;
    Eigen::MatrixXcd M(N, N);
    Eigen::VectorXcd rhs(N);
    for (int j = 0; j < N; ++j) M(0, j) = std::pow(cplx(-2.0), j);
    rhs[0] = -yq / 2.0 - rN * std::pow(cplx(-2.0), N);
    for (int i = 0; i < g; ++i) {
      for (int j = 0; j < N; ++j) M(i + 1, j) = rp.A(i, N + j);
      rhs[i + 1] = -rN * rp.A(i, 2 * N);
    }
    Eigen::VectorXcd r = M.partialPivLu().solve(rhs);
    pd.w_coeffs.resize(N + 1);
    pd.w_coeffs.head(N) = r;
    pd.w_coeffs[N] = rN;
    pd.W = rp.B.rightCols(N + 1) * pd.w_coeffs / two_pi_i;
    pd.w_normalization_residual = (rp.A.rightCols(N + 1) * pd.w_coeffs).cwiseAbs().maxCoeff();
    // Residues: +1 at oo-, -1 at q+, 0 at oo+ (the rational part contributes -1/2 at each infinity).
    Numerators fw = [&](cplx lam) {
      Eigen::VectorXcd v(1);
      v[0] = detail::polyvals(lam, N + 1).cwiseProduct(pd.w_coeffs).sum() / (lam + 2.0);
      return v;
    };
    cplx rp_inf = residue_at_infinity(C, fw, 1)[0] + 0.5, rm_inf = residue_at_infinity(C, fw, -1)[0] + 0.5;
    pd.w_residue_residual = std::max(std::abs(rp_inf), std::abs(rm_inf - 1.0));
  }
  return pd;
}

// Abel map of a divisor based at e_1, normalized by d omega; also the raw Omega-integrals.
struct AbelResult {
  Eigen::VectorXcd raw;     // sum_k of int Omega_1..Omega_N
  Eigen::VectorXcd normalized;
};

inline AbelResult abel_map(const SpectralCurve& curve, const PeriodData& pd, const std::vector<CurvePoint>& divisor,
                           double tol = 1e-11) {
  auto om = omega_numerators(curve);
  int N = curve.N();
  AbelResult r;
  r.raw = Eigen::VectorXcd::Zero(N);
  // Canonical summation order makes the result independent of point labels.
  std::vector<CurvePoint> pts = divisor;
  std::sort(pts.begin(), pts.end(), [](const CurvePoint& u, const CurvePoint& v) {
    auto key = [](const CurvePoint& q) {
      return std::array<double, 5>{double(q.infinity), q.lam.real(), q.lam.imag(), q.y.real(), q.y.imag()};
    };
    return key(u) < key(v);
  });
  for (auto& p : pts) {
    if (p.infinity != 0) {
      Numerators fh = [&](cplx lam) -> Eigen::VectorXcd { return om(lam).head(N - 1); };
      Eigen::VectorXcd v = Eigen::VectorXcd::Zero(N);
      v.head(N - 1) = abel_integral(curve.hc, fh, p, tol);
      v[N - 1] = std::numeric_limits<double>::quiet_NaN();
      r.raw += v;
    } else {
      r.raw += abel_integral(curve.hc, om, p, tol);
    }
  }
  r.normalized = pd.norm_hol * r.raw.head(N - 1);
  return r;
}

inline Eigen::VectorXcd abel_point(const SpectralCurve& curve, const PeriodData& pd, const CurvePoint& p,
                                   double tol = 1e-11) {
  return abel_map(curve, pd, {p}, tol).normalized;
}

inline std::vector<CurvePoint> divisor_of(const SovChart& ch) {
  std::vector<CurvePoint> d;
  for (int k = 0; k < ch.size(); ++k) d.push_back({ch.lambdas[k], ch.ys[k], 0});
  return d;
}

// F_j = sum_k int Omega_j (j < N), F_N = (log Q - sum_k int Omega_N) / (4 (P + 1/P)).
inline Eigen::VectorXcd angle_coordinates(const SpectralCurve& curve, const PeriodData& pd, const SovChart& ch,
                                          double tol = 1e-11) {
  auto div = divisor_of(ch);
  double margin = 1e-9 * curve.hc.scale();
  for (auto& p : div)
    if (std::abs(p.lam - curve.hc.branch_points()[0]) < margin)
      throw Error(ErrorKind::evaluation, "divisor touches the base point");
  auto a = abel_map(curve, pd, div, tol);
  int N = curve.N();
  Eigen::VectorXcd F = a.raw;
  F[N - 1] = (std::log(ch.bigQ) - a.raw[N - 1]) / (4.0 * curve.p_sum());
  return F;
}

// Generators of the ambiguity lattice of F (columns): A- and B-periods, and 2 pi i / (4 (P + 1/P))
// in the last slot (log Q branch, equivalently a loop around oo+).
inline Eigen::MatrixXcd angle_lattice(const SpectralCurve& curve, const PeriodData& pd) {
  int N = pd.N, g = pd.g;
  cplx ps = curve.p_sum();
  Eigen::MatrixXcd G(N, 2 * g + 1);
  for (int i = 0; i < g; ++i) {
    G.col(i) = pd.a_periods.row(i).transpose();
    G.col(g + i) = pd.b_periods.row(i).transpose();
    G(N - 1, i) = -G(N - 1, i) / (4.0 * ps);
    G(N - 1, g + i) = -G(N - 1, g + i) / (4.0 * ps);
  }
  G.col(2 * g) = Eigen::VectorXcd::Zero(N);
  G(N - 1, 2 * g) = cplx(0.0, 2.0 * std::numbers::pi) / (4.0 * ps);
  return G;
}

// Removes the lattice part of v (in the real span of the generators) by rounding.
inline Eigen::VectorXcd lattice_round(const Eigen::VectorXcd& v, const Eigen::MatrixXcd& G) {
  int n = static_cast<int>(G.rows()), m = static_cast<int>(G.cols());
  Eigen::MatrixXd R(2 * n, m);
  R.topRows(n) = G.real();
  R.bottomRows(n) = G.imag();
  Eigen::VectorXd b(2 * n);
  b.head(n) = v.real();
  b.tail(n) = v.imag();
  Eigen::VectorXd c = R.colPivHouseholderQr().solve(b);
  Eigen::VectorXd k = c.array().round().matrix();
  return v - G * k.cast<cplx>();
}

// Unwraps a sequence of angle vectors into a continuous branch, predicting linearly.
inline std::vector<Eigen::VectorXcd> unwrap_angles(const std::vector<Eigen::VectorXcd>& F, const Eigen::MatrixXcd& G) {
  std::vector<Eigen::VectorXcd> out;
  for (std::size_t i = 0; i < F.size(); ++i) {
    if (i == 0) {
      out.push_back(F[0]);
      continue;
    }
    Eigen::VectorXcd pred = i >= 2 ? Eigen::VectorXcd(2.0 * out[i - 1] - out[i - 2]) : out[i - 1];
    out.push_back(pred + lattice_round(F[i] - pred, G));
  }
  return out;
}

// Least-squares line through (t_i, v_i): slope, intercept, and max residual.
struct LineFit {
  cplx slope{}, intercept{};
  double residual = 0.0;
};

inline LineFit fit_line(const std::vector<double>& t, const std::vector<cplx>& v) {
  if (t.size() < 2) throw Error(ErrorKind::domain, "insufficient samples for a slope fit");
  double n = static_cast<double>(t.size()), st = 0, stt = 0;
  cplx sv = 0, stv = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    st += t[i];
    stt += t[i] * t[i];
    sv += v[i];
    stv += t[i] * v[i];
  }
  double den = n * stt - st * st;
  if (std::abs(den) < 1e-300) throw Error(ErrorKind::domain, "insufficient samples for a slope fit");
  LineFit f;
  f.slope = (n * stv - st * sv) / den;
  f.intercept = (sv - f.slope * st) / n;
  for (std::size_t i = 0; i < t.size(); ++i) f.residual = std::max(f.residual, std::abs(v[i] - f.intercept - f.slope * t[i]));
  return f;
}

// Unwrapped angles of the flow of P_k at the given times. Intermediate samples are
// inserted (doubling) until consecutive increments stay below a quarter of the shortest
// lattice generator, so the lattice rounding cannot pick a wrong branch.
struct AngleSeries {
  std::vector<double> times;
  std::vector<Eigen::VectorXcd> angles;
  int refinement = 1;
  double max_increment = 0.0;
};

inline AngleSeries angle_series(const SpectralCurve& curve, const PeriodData& pd, const PhasePoint& x, const ModelParams& p, int k,
                                const std::vector<double>& times, double ode_tol = 1e-10, double quad_tol = 1e-11,
                                int max_refinement = 256) {
  if (times.size() < 2) throw Error(ErrorKind::domain, "insufficient samples for angle tracking");
  auto G = angle_lattice(curve, pd);
  double shortest = 1e300;
  for (int j = 0; j < G.cols(); ++j) shortest = std::min(shortest, G.col(j).norm());
  for (int sub = 1;; sub *= 2) {
    std::vector<double> fine{times[0]};
    for (std::size_t i = 1; i < times.size(); ++i)
      for (int s = 1; s <= sub; ++s) fine.push_back(times[i - 1] + (times[i] - times[i - 1]) * s / sub);
    auto tr = integrate_flow(x, p, k, fine, ode_tol);
    std::vector<Eigen::VectorXcd> F;
    for (auto& st : tr.states) F.push_back(angle_coordinates(curve, pd, sov_chart(st, p), quad_tol));
    auto U = unwrap_angles(F, G);
    double inc = 0.0;
    for (std::size_t i = 1; i < U.size(); ++i) inc = std::max(inc, (U[i] - U[i - 1]).norm());
    if (inc < 0.25 * shortest || sub >= max_refinement) {
      if (inc >= 0.25 * shortest)
        throw Error(ErrorKind::tracking, "angle increments exceed the lattice resolution at refinement " + std::to_string(sub));
      AngleSeries out;
      out.refinement = sub;
      out.max_increment = inc;
      for (std::size_t i = 0; i < U.size(); i += sub) {
        out.times.push_back(fine[i]);
        out.angles.push_back(U[i]);
      }
      return out;
    }
  }
}

// ---- Action periods J_k = oint log(zeta) dw / w on Sigma ----

// Stadium-shaped loop at distance delta around the segment [a, b], counterclockwise,
// parametrized by t in [0, 4): right side, cap at b, left side, cap at a.
struct CapsuleContour {
  cplx a{}, b{};
  double delta = 0.0;

  static constexpr double length = 4.0;

  cplx point(double t) const {
    cplx e = (b - a) / std::abs(b - a), n = cplx(0.0, 1.0) * e;
    int k = std::clamp(static_cast<int>(std::floor(t)), 0, 3);
    double s = t - k;
    cplx rot = std::exp(cplx(0.0, std::numbers::pi * s));
    switch (k) {
      case 0: return a - delta * n + (b - a) * s;
      case 1: return b - delta * n * rot;
      case 2: return b + delta * n - (b - a) * s;
      default: return a + delta * n * rot;
    }
  }

  cplx tangent(double t) const {
    cplx e = (b - a) / std::abs(b - a), n = cplx(0.0, 1.0) * e;
    int k = std::clamp(static_cast<int>(std::floor(t)), 0, 3);
    double s = t - k;
    cplx drot = cplx(0.0, std::numbers::pi) * std::exp(cplx(0.0, std::numbers::pi * s));
    switch (k) {
      case 0: return b - a;
      case 1: return -delta * n * drot;
      case 2: return a - b;
      default: return delta * n * drot;
    }
  }
};

struct ActionContours {
  std::vector<CapsuleContour> loops;   // around cuts 0..g-1
  double w_radius = 0.0;               // circle |w| = R for J_N
};

// Loops hug cut i closely enough to exclude the other cuts, lambda = +-2 (where w ramifies)
// and the zeros of det T (where zeta = t + y can vanish). shrink < 1 gives a homologous
// tighter loop.
inline ActionContours action_contours(const SpectralCurve& curve, double shrink = 1.0) {
  const auto& C = curve.hc;
  int g = curve.genus();
  ActionContours ac;
  std::vector<cplx> obstacles = curve.det_zeros();
  obstacles.push_back(2.0);
  obstacles.push_back(-2.0);
  double big = C.scale();
  for (auto o : obstacles) big = std::max(big, std::abs(o));
  for (int i = 0; i < g; ++i) {
    cplx a = C.cut_start(i), b = C.cut_end(i);
    double dmin = 1e300;
    for (auto o : obstacles) dmin = std::min(dmin, point_segment_distance(o, a, b));
    for (int j = 0; j < C.cut_count(); ++j)
      if (j != i)
        for (int s = 0; s <= 64; ++s) {
          cplx q = C.cut_start(j) + (C.cut_end(j) - C.cut_start(j)) * (s / 64.0);
          dmin = std::min(dmin, point_segment_distance(q, a, b));
        }
    if (dmin < 1e-6 * C.scale()) throw Error(ErrorKind::contour, "no clear loop around cut " + std::to_string(i));
    double delta = std::min(0.4 * dmin, 0.5 * std::abs(b - a)) * shrink;
    ac.loops.push_back({a, b, delta});
  }
  // lambda(w) = w + 1/w on |w| = R stays outside the disk of radius R - 1/R.
  ac.w_radius = 2.0 * big + 3.0;
  return ac;
}

namespace detail {

// Continuous branch of log(zeta) (and of w) along a closed contour, from a fine ordered
// sweep; integrand evaluations snap to the branch nearest to the interpolated sweep.
struct BranchSweep {
  std::vector<cplx> logz, w;
  int n = 0;
  double period = 2.0 * std::numbers::pi;

  template <class Eval>
  void build(int samples, double per, cplx w0, cplx log0, Eval eval) {
    n = samples;
    period = per;
    logz.resize(n + 1);
    w.resize(n + 1);
    cplx wp = w0, lp = log0;
    for (int i = 0; i <= n; ++i) {
      double th = period * i / n;
      auto [wi, zeta] = eval(th, wp);
      cplx l = std::log(zeta);
      l += cplx(0.0, 2.0 * std::numbers::pi * std::round((lp - l).imag() / (2.0 * std::numbers::pi)));
      w[i] = wi;
      logz[i] = l;
      wp = wi;
      lp = l;
    }
  }

  cplx interp(const std::vector<cplx>& v, double th) const {
    double x = th / period * n;
    int i = std::clamp(static_cast<int>(std::floor(x)), 0, n - 1);
    double f = x - i;
    return (1.0 - f) * v[i] + f * v[i + 1];
  }

  double max_jump() const {
    double m = 0.0;
    for (int k = 0; k < n; ++k) m = std::max(m, std::abs(logz[k + 1] - logz[k]));
    return m;
  }
  int winding() const { return static_cast<int>(std::lround((logz[n] - logz[0]).imag() / (2.0 * std::numbers::pi))); }
};

inline cplx nearest_root_w(cplx lam, cplx ref) {
  cplx s = std::sqrt(lam * lam - 4.0);
  cplx w1 = (lam + s) / 2.0, w2 = (lam - s) / 2.0;
  return std::abs(w1 - ref) <= std::abs(w2 - ref) ? w1 : w2;
}

inline cplx small_root_w(cplx lam) {
  cplx s = std::sqrt(lam * lam - 4.0);
  cplx w = (lam - s) / 2.0;
  return std::abs(w) <= 1.0 ? w : (lam + s) / 2.0;
}

inline cplx snap_log(cplx zeta, cplx ref) {
  cplx l = std::log(zeta);
  return l + cplx(0.0, 2.0 * std::numbers::pi * std::round((ref - l).imag() / (2.0 * std::numbers::pi)));
}

// Lift of a capsule loop to Sigma with a continuous w, starting on the root |w| <= 1.
inline BranchSweep lift_loop(const SpectralCurve& curve, const CapsuleContour& loop, bool with_log) {
  cplx lam0 = loop.point(0.0);
  cplx w0 = small_root_w(lam0);
  BranchSweep bs;
  auto eval = [&](double t, cplx wref) {
    cplx lam = loop.point(t);
    cplx w = nearest_root_w(lam, wref);
    return std::pair<cplx, cplx>(w, with_log ? curve.transfer_w(w) + curve.y1(lam) : cplx(1.0));
  };
  for (int n = 8192; n <= (1 << 17); n *= 2) {
    bs.build(n, CapsuleContour::length, w0, with_log ? std::log(curve.transfer_w(w0) + curve.y1(lam0)) : 0.0, eval);
    if (bs.max_jump() < 0.1) break;
  }
  if (std::abs(bs.w[bs.n] - bs.w[0]) > 1e-8 * std::max(1.0, std::abs(bs.w[0])))
    throw Error(ErrorKind::contour, "lift of the loop does not close on Sigma");
  return bs;
}

inline cplx integrate_loop(const std::function<cplx(double)>& f, double tol) {
  cplx r = 0.0;
  for (int k = 0; k < 16; ++k) r += integrate_adaptive_scalar(f, 0.25 * k, 0.25 * (k + 1), tol, 1e-14);
  return r;
}

}  // namespace detail

struct ActionResult {
  Eigen::VectorXcd J;
  std::vector<int> winding;   // net winding of zeta around 0 along each contour
  double max_jump = 0.0;      // largest log step in the sweeps (continuity diagnostic)
};

// J_i over the lift of the loop around cut i starting on the root |w| <= 1; J_N over
// |w| = R counterclockwise, with log(zeta) continuing log P + N log w at the start.
inline ActionResult action_periods(const SpectralCurve& curve, const ActionContours& ac, double tol = 1e-12) {
  int N = curve.N(), g = curve.genus();
  ActionResult res;
  res.J.resize(N);
  for (int i = 0; i < g; ++i) {
    const auto& loop = ac.loops[i];
    auto bs = detail::lift_loop(curve, loop, true);
    res.max_jump = std::max(res.max_jump, bs.max_jump());
    res.winding.push_back(bs.winding());
    res.J[i] = detail::integrate_loop(
        [&](double t) {
          cplx lam = loop.point(t);
          cplx w = detail::nearest_root_w(lam, bs.interp(bs.w, t));
          cplx l = detail::snap_log(curve.transfer_w(w) + curve.y1(lam), bs.interp(bs.logz, t));
          return l * loop.tangent(t) / (w - 1.0 / w);
        },
        tol);
  }
  {
    double R = ac.w_radius;
    const double per = 4.0;
    auto wof = [&](double t) { return std::polar(R, 2.0 * std::numbers::pi * t / per); };
    auto eval = [&](double t, cplx) {
      cplx w = wof(t);
      return std::pair<cplx, cplx>(w, curve.transfer_w(w) + curve.y1(w + 1.0 / w));
    };
    cplx start = std::log(curve.bigP) + double(N) * std::log(R);
    detail::BranchSweep bs;
    for (int n = 8192; n <= (1 << 17); n *= 2) {
      bs.build(n, per, R, detail::snap_log(eval(0.0, R).second, start), eval);
      if (bs.max_jump() < 0.1) break;
    }
    res.max_jump = std::max(res.max_jump, bs.max_jump());
    res.winding.push_back(bs.winding());
    res.J[N - 1] = detail::integrate_loop(
        [&](double t) {
          cplx w = wof(t);
          cplx l = detail::snap_log(curve.transfer_w(w) + curve.y1(w + 1.0 / w), bs.interp(bs.logz, t));
          return l * cplx(0.0, 2.0 * std::numbers::pi / per);
        },
        tol);
  }
  if (res.max_jump > 0.5) throw Error(ErrorKind::contour, "log(zeta) sweep is too coarse; zeta nearly vanishes on a contour");
  return res;
}

// Periods of Omega_1..Omega_N over the action contours (rows: loops around cuts, then the w-circle).
inline Eigen::MatrixXcd action_contour_periods(const SpectralCurve& curve, const ActionContours& ac) {
  int N = curve.N(), g = curve.genus();
  Eigen::MatrixXcd M(N, N);
  auto om = omega_numerators(curve);
  for (int i = 0; i < g; ++i) {
    const auto& loop = ac.loops[i];
    VecFn f = [&](double t) -> Eigen::VectorXcd {
      cplx lam = loop.point(t);
      return om(lam) * (loop.tangent(t) / curve.y1(lam));
    };
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(N);
    for (int k = 0; k < 4; ++k) v += integrate_adaptive(f, k, k + 1.0, 1e-14, 1e-13);
    M.row(i) = v.transpose();
  }
  double R = ac.w_radius;
  VecFn f = [&](double th) -> Eigen::VectorXcd {
    cplx w = std::polar(R, th);
    return omega_w(curve, w, curve.y_sigma(w)) * (cplx(0.0, 1.0) * w);
  };
  M.row(N - 1) = integrate_adaptive(f, 0.0, 2.0 * std::numbers::pi, 1e-14, 1e-13).transpose();
  return M;
}

// The period of Omega_form around cut 0, integrated independently in the w-chart on Sigma
// along the lift of the action loop.
inline cplx w_chart_period(const SpectralCurve& curve, const ActionContours& ac, int form = 0) {
  const auto& loop = ac.loops[0];
  auto bs = detail::lift_loop(curve, loop, false);
  VecFn f = [&](double t) -> Eigen::VectorXcd {
    cplx lam = loop.point(t);
    cplx w = detail::nearest_root_w(lam, bs.interp(bs.w, t));
    cplx dw = loop.tangent(t) * w * w / (w * w - 1.0);
    Eigen::VectorXcd v(1);
    v[0] = omega_w(curve, w, curve.y1(lam))[form] * dw;
    return v;
  };
  cplx r = 0.0;
  for (int k = 0; k < 4; ++k) r += integrate_adaptive(f, k, k + 1.0, 1e-14, 1e-13)[0];
  return r;
}

}  // namespace xxzr
