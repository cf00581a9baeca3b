#pragma once

// Residuals of the algebraic identities of the chain. Each function returns a
// relative residual: the defect divided by the magnitude of the terms involved.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "monodromy.hpp"

namespace xxzr {

namespace detail {

inline Eigen::Matrix2cd sigma2() {
  Eigen::Matrix2cd s;
  s << 0, -1, 1, 0;
  return s;
}
inline Eigen::Matrix2cd sigma3() {
  Eigen::Matrix2cd s;
  s << 1, 0, 0, -1;
  return s;
}

struct EntryGradients {
  Eigen::Matrix2cd value;
  std::array<std::array<Eigen::VectorXcd, 2>, 2> grad;
};

inline EntryGradients entry_gradients(const Mat2<Dual>& m, int n) {
  EntryGradients g;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      g.value(i, j) = m[i][j].v;
      g.grad[i][j] = gradient_of(m[i][j], n);
    }
  return g;
}

// LHS[2i+k][2j+l] = {X_ij(z1), Y_kl(z2)}.
inline Eigen::Matrix4cd tensor_bracket(const EntryGradients& X, const EntryGradients& Y, const PhasePoint& x) {
  Eigen::Matrix4cd r;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l) r(2 * i + k, 2 * j + l) = bracket_of_gradients(X.grad[i][j], Y.grad[k][l], x);
  return r;
}

inline Eigen::Matrix4cd kron(const Eigen::Matrix2cd& a, const Eigen::Matrix2cd& b) {
  Eigen::Matrix4cd r;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) r.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
  return r;
}

inline double relres(const Eigen::MatrixXcd& lhs, const Eigen::MatrixXcd& rhs, double scale) {
  return (lhs - rhs).cwiseAbs().maxCoeff() / std::max(scale, 1e-300);
}

inline EntryGradients monodromy_gradients(const PhasePoint& x, const ModelParams& p, cplx z) {
  auto num = monodromy_numerator(seed_duals(x), p);
  auto m = num.eval(z);
  cplx d = 1.0 / (z - 1.0 / z);
  for (auto& r : m)
    for (auto& v : r) v = v * d;
  return entry_gradients(m, num_vars(x));
}

}  // namespace detail

inline double det_l_residual(const SiteState<cplx>& s, cplx z) {
  auto L = to_eigen(lax_matrix(s).eval(z));
  cplx rhs = z * z + 1.0 / (z * z) - casimir(s);
  return std::abs(L.determinant() - rhs) / std::max({1.0, std::abs(rhs), std::abs(L(0, 0) * L(1, 1))});
}

// L(z)L(1/z) = -det L, L(1/z)^t = -s2 L s2^-1, L(-z) = -s3 L s3^-1.
inline double l_symmetry_residual(const SiteState<cplx>& s, cplx z) {
  auto lm = lax_matrix(s);
  auto L = to_eigen(lm.eval(z)), Li = to_eigen(lm.eval(1.0 / z)), Lm = to_eigen(lm.eval(-z));
  auto s2 = detail::sigma2(), s3 = detail::sigma3();
  double sc = std::max(1.0, L.cwiseAbs().maxCoeff() * Li.cwiseAbs().maxCoeff());
  double r = detail::relres(L * Li, -L.determinant() * Eigen::Matrix2cd::Identity(), sc);
  sc = std::max(1.0, L.cwiseAbs().maxCoeff());
  r = std::max(r, detail::relres(Li.transpose(), -s2 * L * s2.inverse(), sc));
  r = std::max(r, detail::relres(Lm, -s3 * L * s3.inverse(), sc));
  return r;
}

// {L1(z1), L2(z2)} = [r(z1/z2), L1 L2] for a single site.
inline double rtt_residual(const SiteState<cplx>& s, cplx z1, cplx z2) {
  PhasePoint x{{s}};
  auto y = seed_duals(x);
  auto lm = lax_matrix(y.sites[0]);
  auto X = detail::entry_gradients(lm.eval(z1), 3), Y = detail::entry_gradients(lm.eval(z2), 3);
  Eigen::Matrix4cd lhs = detail::tensor_bracket(X, Y, x);
  Eigen::Matrix4cd L12 = detail::kron(X.value, Eigen::Matrix2cd::Identity()) * detail::kron(Eigen::Matrix2cd::Identity(), Y.value);
  Eigen::Matrix4cd R = r_matrix(z1 / z2);
  Eigen::Matrix4cd rhs = R * L12 - L12 * R;
  double sc = std::max({1.0, lhs.cwiseAbs().maxCoeff(), (R * L12).cwiseAbs().maxCoeff()});
  return detail::relres(lhs, rhs, sc);
}

inline double monodromy_symmetry_residual(const ReflectionData<cplx>& data, const std::vector<cplx>& zs) {
  auto r = symmetry_residuals(data, zs);
  return std::max({r.sigma3, r.sigma2, r.entries});
}

// {T1(z1), T2(z2)} = [r(z1/z2), T1 T2] + T1 r(z1 z2) T2 - T2 r(z1 z2) T1.
inline double reflection_algebra_residual(const PhasePoint& x, const ModelParams& p, cplx z1, cplx z2) {
  auto X = detail::monodromy_gradients(x, p, z1), Y = detail::monodromy_gradients(x, p, z2);
  Eigen::Matrix4cd lhs = detail::tensor_bracket(X, Y, x);
  Eigen::Matrix4cd T1 = detail::kron(X.value, Eigen::Matrix2cd::Identity());
  Eigen::Matrix4cd T2 = detail::kron(Eigen::Matrix2cd::Identity(), Y.value);
  Eigen::Matrix4cd Ra = r_matrix(z1 / z2), Rb = r_matrix(z1 * z2);
  Eigen::Matrix4cd rhs = Ra * T1 * T2 - T1 * T2 * Ra + T1 * Rb * T2 - T2 * Rb * T1;
  double sc = std::max({1.0, lhs.cwiseAbs().maxCoeff(), (Ra * T1 * T2).cwiseAbs().maxCoeff(), (T1 * Rb * T2).cwiseAbs().maxCoeff()});
  return detail::relres(lhs, rhs, sc);
}

// Closed forms of {A(z1),A(z2)} and {C(z1),A(z2)}.
inline double explicit_brackets_residual(const PhasePoint& x, const ModelParams& p, cplx z1, cplx z2) {
  auto X = detail::monodromy_gradients(x, p, z1), Y = detail::monodromy_gradients(x, p, z2);
  cplx A1 = X.value(0, 0), B1 = X.value(0, 1), C1 = X.value(1, 0), D1 = X.value(1, 1);
  cplx A2 = Y.value(0, 0), B2 = Y.value(0, 1), C2 = Y.value(1, 0);
  cplx aa = bracket_of_gradients(X.grad[0][0], Y.grad[0][0], x);
  cplx aa_rhs = 2.0 / (z1 * z2 - 1.0 / (z1 * z2)) * (B1 * C2 - C1 * B2);
  double r = std::abs(aa - aa_rhs) / std::max({1.0, std::abs(aa), std::abs(B1 * C2)});
  cplx ca = bracket_of_gradients(X.grad[1][0], Y.grad[0][0], x);
  cplx pre = 2.0 * z1 / ((z2 * z2 - z1 * z1) * (z1 * z1 * z2 * z2 - 1.0));
  std::array<cplx, 6> terms{z1 * std::pow(z2, 4) * C1 * A2, -z1 * z1 * std::pow(z2, 3) * A1 * C2, -z1 * z1 * z2 * D1 * C2,
                            std::pow(z2, 3) * D1 * C2, -z1 * C1 * A2, z2 * A1 * C2};
  cplx sum = 0.0;
  double mag = std::abs(ca);
  for (auto t : terms) {
    sum += t;
    mag = std::max(mag, std::abs(pre * t));
  }
  r = std::max(r, std::abs(ca - pre * sum) / std::max(1.0, mag));
  return r;
}

// |{t(z1), t(z2)}| relative to the sizes of the individual terms.
inline double transfer_commutativity_residual(const PhasePoint& x, const ModelParams& p, cplx z1, cplx z2) {
  auto X = detail::monodromy_gradients(x, p, z1), Y = detail::monodromy_gradients(x, p, z2);
  Eigen::VectorXcd g1 = 0.5 * (X.grad[0][0] + X.grad[1][1]), g2 = 0.5 * (Y.grad[0][0] + Y.grad[1][1]);
  cplx tt = bracket_of_gradients(g1, g2, x);
  double sc = 1.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) sc = std::max(sc, std::abs(bracket_of_gradients(X.grad[i][i], Y.grad[j][j], x)));
  return std::abs(tt) / sc;
}

// t(-z) = t(z) and t(1/z) = -t(z).
inline double transfer_parity_residual(const ReflectionData<cplx>& data, cplx z) {
  cplx t = data.transfer(z);
  double sc = std::max(1.0, std::abs(t));
  return std::max(std::abs(data.transfer(-z) - t), std::abs(data.transfer(1.0 / z) + t)) / sc;
}

// sum_j P_j = (xi - 1/xi) prod_k (omega_k - a_k^2 - a_k^-2).
inline double sum_rule_residual(const ReflectionData<cplx>& data) {
  const auto& p = data.params;
  cplx lhs = 0.0;
  double mag = 1.0;
  for (auto h : data.hamiltonians) {
    lhs += h;
    mag = std::max(mag, std::abs(h));
  }
  cplx rhs = p.xi - 1.0 / p.xi;
  for (int k = 0; k < p.N; ++k) rhs *= data.leaf[k] - p.a[k] * p.a[k] - 1.0 / (p.a[k] * p.a[k]);
  return std::abs(lhs - rhs) / std::max(mag, std::abs(rhs));
}

inline double big_p_residual(const ReflectionData<cplx>& data) {
  cplx P = data.bigP, h = data.hamiltonians[data.params.N];
  return std::abs(h / 2.0 - (P - 1.0 / P)) / std::max({1.0, std::abs(P), std::abs(1.0 / P)});
}

inline double det_monodromy_residual(const ReflectionData<cplx>& data, cplx z) {
  auto T = to_eigen(data.monodromy(z));
  cplx d = data.det_closed_form(z);
  return std::abs(T.determinant() - d) / std::max({1.0, std::abs(d), std::abs(T(0, 0) * T(1, 1))});
}

// {T(z), P_k} against [T, M_sigma] and [M_plus, T]; returns the worse of the two.
inline double lax_residual(const PhasePoint& x, const ModelParams& p, int k, cplx z) {
  auto data = reflection_monodromy(x, p);
  auto X = detail::monodromy_gradients(x, p, z);
  auto gP = gradient([&](const PhasePointT<Dual>& y) { return hamiltonians_from_numerator(monodromy_numerator(y, p), p.N)[k]; }, x);
  Eigen::Matrix2cd lhs;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) lhs(i, j) = bracket_of_gradients(X.grad[i][j], gP, x);
  auto M = lax_pair(data, k, z);
  Eigen::Matrix2cd T = X.value;
  Eigen::Matrix2cd r1 = T * M.m_sigma - M.m_sigma * T, r2 = M.m_plus * T - T * M.m_plus;
  double sc = std::max({1.0, lhs.cwiseAbs().maxCoeff(), (T * M.m_sigma).cwiseAbs().maxCoeff(), (T * M.m_plus).cwiseAbs().maxCoeff()});
  return std::max(detail::relres(lhs, r1, sc), detail::relres(lhs, r2, sc));
}

// Smallest singular value of d(P_1..P_N)/dx, scaled by the largest.
inline double hamiltonian_independence(const PhasePoint& x, const ModelParams& p) {
  auto P = hamiltonians_from_numerator(monodromy_numerator(seed_duals(x), p), p.N);
  Eigen::MatrixXcd J(p.N, num_vars(x));
  for (int k = 1; k <= p.N; ++k) J.row(k - 1) = gradient_of(P[k], num_vars(x)).transpose();
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(J);
  auto s = svd.singularValues();
  return s(s.size() - 1) / std::max(1.0, s(0));
}

}  // namespace xxzr
