#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "laurent.hpp"
#include "phasespace.hpp"

namespace xxzr {

// L(s z) = [[s z k - 1/(s z k), e], [f, s z/k - k/(s z)]].
template <class T>
LaurentMatrix<T> lax_matrix(const SiteState<T>& s, cplx scale = 1.0) {
  if (value_of(s.k) == cplx(0.0)) throw Error(ErrorKind::invalid_state, "k = 0");
  T ki = T(1.0) / s.k;
  cplx si = 1.0 / scale;
  return {LaurentPoly<T>(-1, {-ki * si, T(0.0), s.k * scale}), LaurentPoly<T>::constant(s.e),
          LaurentPoly<T>::constant(s.f), LaurentPoly<T>(-1, {-s.k * si, T(0.0), ki * scale})};
}

template <class T>
LaurentMatrix<T> k_matrix(cplx xi) {
  if (xi == cplx(0.0)) throw Error(ErrorKind::domain, "xi = 0");
  cplx xii = 1.0 / xi;
  return {LaurentPoly<T>(-1, {T(-xii), T(0.0), T(xi)}), {}, {}, LaurentPoly<T>(-1, {T(xi), T(0.0), T(-xii)})};
}

// Numerator N(z) of T(z) = N(z)/(z - 1/z).
template <class T>
LaurentMatrix<T> monodromy_numerator(const PhasePointT<T>& x, const ModelParams& p) {
  if (x.size() != p.N) throw Error(ErrorKind::invalid_state, "phase point length differs from N");
  auto M = LaurentMatrix<T>::identity();
  for (int j = 0; j < p.N; ++j) M = matmul(M, lax_matrix(x.sites[j], p.a[j]));
  M = matmul(M, k_matrix<T>(p.xi));
  for (int j = p.N - 1; j >= 0; --j) {
    cplx aj = p.ordering == OrderingMode::reversed ? p.a[j] : p.a[p.N - 1 - j];
    M = matmul(M, lax_matrix(x.sites[j], 1.0 / aj));
  }
  return M;
}

inline LaurentPoly<cplx> z_plus_inv() { return LaurentPoly<cplx>(-1, {1.0, 0.0, 1.0}); }
inline LaurentPoly<cplx> z_minus_inv() { return LaurentPoly<cplx>(-1, {-1.0, 0.0, 1.0}); }

template <class T>
LaurentPoly<T> lift(const LaurentPoly<cplx>& p) {
  std::vector<T> c(p.coeffs().begin(), p.coeffs().end());
  return LaurentPoly<T>(p.low(), c);
}

// ((z - 1/z)/(z + 1/z)) t(z) as a Laurent polynomial in w = z^2.
template <class T>
LaurentPoly<T> transfer_kernel(const LaurentMatrix<T>& num) {
  return divide_exact(num.trace() * T(0.5), lift<T>(z_plus_inv()));
}

// P_k = 2^{2 - delta_k0} [z^{2k}] of the transfer kernel.
template <class T>
std::vector<T> hamiltonians_from_numerator(const LaurentMatrix<T>& num, int N) {
  auto S = transfer_kernel(num);
  std::vector<T> P(N + 1);
  for (int k = 0; k <= N; ++k) P[k] = S.coeff(2 * k) * (k == 0 ? 2.0 : 4.0);
  return P;
}

template <class T>
T big_p(const PhasePointT<T>& x, cplx xi) {
  T r(xi);
  for (auto& s : x.sites) r = r * s.k * s.k;
  return r;
}

// Leading coefficient of C(z)/(z + 1/z) in lambda, summed site by site.
template <class T>
T big_q_closed_form(const PhasePointT<T>& x, const ModelParams& p) {
  T q(0.0);
  for (int j = 0; j < p.N; ++j) {
    T up(p.xi), dn(1.0 / p.xi);
    for (int i = j + 1; i < p.N; ++i) {
      up = up * x.sites[i].k * x.sites[i].k;
      dn = dn / (x.sites[i].k * x.sites[i].k);
    }
    T kj = x.sites[j].k / p.a[j];
    q += x.sites[j].f * (kj * up - dn / kj);
  }
  return q;
}

template <class T>
struct ReflectionData {
  ModelParams params;
  LaurentMatrix<T> numerator;
  std::vector<T> hamiltonians;
  T bigP{};
  T bigQ{};
  std::vector<T> leaf;

  Mat2<T> monodromy(cplx z) const {
    cplx d = 1.0 / (z - 1.0 / z);
    auto m = numerator.eval(z);
    for (auto& r : m)
      for (auto& v : r) v = v * d;
    return m;
  }
  T A(cplx z) const { return numerator.a.eval(z) / (z - 1.0 / z); }
  T B(cplx z) const { return numerator.b.eval(z) / (z - 1.0 / z); }
  T C(cplx z) const { return numerator.c.eval(z) / (z - 1.0 / z); }
  T D(cplx z) const { return numerator.d.eval(z) / (z - 1.0 / z); }
  T transfer(cplx z) const { return (A(z) + D(z)) * 0.5; }

  // det T(z) from the factorized product of determinants.
  T det_closed_form(cplx z) const {
    T r = (params.xi * z - 1.0 / (z * params.xi)) * (params.xi / z - z / params.xi);
    for (int j = 0; j < params.N; ++j) {
      cplx u = params.a[j] * z;
      cplx v = z / (params.ordering == OrderingMode::reversed ? params.a[j] : params.a[params.N - 1 - j]);
      r = r * (u * u + 1.0 / (u * u) - leaf[j]) * (v * v + 1.0 / (v * v) - leaf[j]);
    }
    cplx d = z - 1.0 / z;
    return r / (d * d);
  }
};

template <class T>
T transfer(const ReflectionData<T>& data, cplx z) {
  return data.transfer(z);
}

// The two extractions of P_0..P_N; throws if they disagree.
inline std::vector<cplx> transfer_coefficients(const ReflectionData<cplx>& data, double tol = 1e-10) {
  int N = data.params.N;
  Eigen::MatrixXcd M(N + 1, N + 1);
  Eigen::VectorXcd rhs(N + 1);
  for (int m = 0; m <= N; ++m) {
    cplx w = std::polar(1.3, std::numbers::pi * (m + 0.37) / (N + 1.5));
    cplx z = std::sqrt(w);
    rhs[m] = data.numerator.trace().eval(z) / (2.0 * (z + 1.0 / z));
    for (int j = 0; j <= N; ++j) M(m, j) = j == 0 ? cplx(0.5) : (std::pow(w, j) + std::pow(w, -j)) / 4.0;
  }
  Eigen::VectorXcd sol = M.partialPivLu().solve(rhs);
  double scale = 1.0, diff = 0.0;
  for (int j = 0; j <= N; ++j) {
    scale = std::max(scale, std::abs(data.hamiltonians[j]));
    diff = std::max(diff, std::abs(sol[j] - data.hamiltonians[j]));
  }
  if (diff > tol * scale) throw Error(ErrorKind::extraction, "residue and basis extractions of P_k disagree by " + std::to_string(diff / scale));
  return data.hamiltonians;
}

// Symmetry residuals of T(z) used to validate a construction.
struct SymmetryResiduals {
  double sigma3 = 0, sigma2 = 0, entries = 0, big_p = 0;
};

inline SymmetryResiduals symmetry_residuals(const ReflectionData<cplx>& data, const std::vector<cplx>& zs) {
  SymmetryResiduals r;
  Eigen::Matrix2cd s3, s2;
  s3 << 1, 0, 0, -1;
  s2 << 0, -1, 1, 0;
  for (auto z : zs) {
    Eigen::Matrix2cd T = to_eigen(data.monodromy(z));
    Eigen::Matrix2cd Tm = to_eigen(data.monodromy(-z));
    Eigen::Matrix2cd Ti = to_eigen(data.monodromy(1.0 / z));
    double sc = T.cwiseAbs().maxCoeff() + 1e-300;
    r.sigma3 = std::max(r.sigma3, (Tm - s3 * T * s3.inverse()).cwiseAbs().maxCoeff() / sc);
    r.sigma2 = std::max(r.sigma2, (Ti.transpose() + s2 * T * s2.inverse()).cwiseAbs().maxCoeff() / sc);
    double e = std::max({std::abs(Ti(0, 0) + T(1, 1)), std::abs(Ti(1, 0) - T(1, 0)), std::abs(Tm(1, 0) + T(1, 0)),
                         std::abs(Tm(0, 0) - T(0, 0))});
    r.entries = std::max(r.entries, e / sc);
  }
  int N = data.params.N;
  cplx P = data.bigP;
  r.big_p = std::abs(data.hamiltonians[N] / 2.0 - (P - 1.0 / P)) / std::max(1.0, std::abs(P - 1.0 / P));
  return r;
}

template <class T>
ReflectionData<T> reflection_monodromy(const PhasePointT<T>& x, const ModelParams& p, bool check = true) {
  ReflectionData<T> data;
  data.params = p;
  data.numerator = monodromy_numerator(x, p);
  data.hamiltonians = hamiltonians_from_numerator(data.numerator, p.N);
  data.bigP = big_p(x, p.xi);
  data.bigQ = big_q_closed_form(x, p);
  data.leaf = casimirs(x);
  if constexpr (!is_dual_v<T>) {
    if (check) {
      std::vector<cplx> zs;
      for (int i = 0; i < 10; ++i) zs.push_back(std::polar(0.7 + 0.05 * i, 0.3 + 0.61 * i));
      auto r = symmetry_residuals(data, zs);
      if (r.sigma3 > 1e-10) throw Error(ErrorKind::construction, "T(-z) = s3 T(z) s3^-1 fails");
      if (r.sigma2 > 1e-10) throw Error(ErrorKind::construction, "T(1/z)^t = -s2 T(z) s2^-1 fails");
      if (r.entries > 1e-10) throw Error(ErrorKind::construction, "entry symmetries of A, C, D fail");
      if (r.big_p > 1e-10) throw Error(ErrorKind::construction, "P_N/2 = P - 1/P fails");
    }
  }
  return data;
}

inline Eigen::Matrix4cd r_matrix(cplx u) {
  if (std::abs(u * u - 1.0) < 1e-14) throw Error(ErrorKind::domain, "r-matrix pole at ratio^2 = 1");
  cplx s = u * u + 1.0;
  Eigen::Matrix4cd r = Eigen::Matrix4cd::Zero();
  r(0, 0) = r(3, 3) = s;
  r(1, 1) = r(2, 2) = -s;
  r(1, 2) = r(2, 1) = 4.0 * u;
  return r / (2.0 * (u * u - 1.0));
}

struct LaxPair {
  Eigen::Matrix2cd m_sigma, m_plus;
};

// {T(z), P_k} = [T, M_sigma] = [M_plus, T]. X = z^{-2k} N(z)/(z + 1/z) is split
// through its Laurent expansion at z = 0; the sigma part only needs degrees <= 0.
inline LaxPair lax_pair(const ReflectionData<cplx>& data, int k, cplx z) {
  for (cplx bad : {cplx(0), cplx(1), cplx(-1), cplx(0, 1), cplx(0, -1)})
    if (std::abs(z - bad) < 1e-12) throw Error(ErrorKind::domain, "lax pair at excluded z");
  if (k < 0 || k > data.params.N) throw Error(ErrorKind::domain, "hamiltonian index out of range");
  double c = k == 0 ? 2.0 : 4.0;
  LaxPair out;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      auto p = data.numerator.at(i, j).shifted(-2 * k);
      cplx xs = 0.0;
      if (!p.is_zero()) {
        // series of p z/(1 + z^2): x_n = sum_m (-1)^m p_{n-2m-1}
        auto xn = [&](int n) {
          cplx s = 0.0;
          for (int m = 0; n - 2 * m - 1 >= p.low(); ++m) s += (m % 2 ? -1.0 : 1.0) * p.coeff(n - 2 * m - 1);
          return s;
        };
        xs = xn(0);
        for (int n = 1; -n >= p.low() + 1; ++n) xs += xn(-n) * (std::pow(z, n) + std::pow(z, -n));
      }
      cplx x = p.eval(z) / (z + 1.0 / z);
      out.m_sigma(i, j) = -c * xs;
      out.m_plus(i, j) = -c * (x - xs);
    }
  return out;
}

// Q_{2N}(lambda) with (z - 1/z)^2 Q = (tr N)^2/4 - det N.
template <class T>
LambdaPoly<T> spectral_polynomial(const LaurentMatrix<T>& num) {
  auto tr = num.trace();
  auto q = tr * tr * T(0.25) - num.det();
  auto d = lift<T>(z_minus_inv());
  return to_lambda(divide_exact(divide_exact(q, d), d));
}

}  // namespace xxzr
