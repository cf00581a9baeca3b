#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "dual.hpp"
#include "error.hpp"

namespace xxzr {

template <class T>
bool is_exact_zero(const T& x) {
  if constexpr (is_dual_v<T>) {
    if (x.v != cplx(0.0)) return false;
    for (auto& g : x.d)
      if (g != cplx(0.0)) return false;
    return true;
  } else {
    return x == T(0.0);
  }
}

// Dense Laurent polynomial sum_n c[n - low] z^n over a tight degree window.
template <class T>
class LaurentPoly {
 public:
  LaurentPoly() = default;
  LaurentPoly(int low, std::vector<T> c) : low_(low), c_(std::move(c)) { trim(); }

  static LaurentPoly monomial(T a, int n) { return LaurentPoly(n, {a}); }
  static LaurentPoly constant(T a) { return monomial(a, 0); }

  bool is_zero() const { return c_.empty(); }
  int low() const { return low_; }
  int high() const { return low_ + static_cast<int>(c_.size()) - 1; }
  const std::vector<T>& coeffs() const { return c_; }

  T coeff(int n) const {
    if (is_zero() || n < low_ || n > high()) return T(0.0);
    return c_[n - low_];
  }

  T eval(cplx z) const {
    if (z == cplx(0.0)) throw Error(ErrorKind::domain, "Laurent evaluation at z = 0");
    T pos(0.0), neg(0.0);
    cplx zi = 1.0 / z;
    for (int n = high(); n >= std::max(low_, 0); --n) pos = pos * z + c_[n - low_];
    for (int n = low_; n <= std::min(high(), -1); ++n) neg = (neg + c_[n - low_]) * zi;
    return pos + neg;
  }

  double max_abs() const {
    double m = 0.0;
    for (auto& x : c_) m = std::max(m, std::abs(value_of(x)));
    return m;
  }

  LaurentPoly& operator+=(const LaurentPoly& o) { return *this = add(*this, o, 1.0); }
  LaurentPoly& operator-=(const LaurentPoly& o) { return *this = add(*this, o, -1.0); }

  friend LaurentPoly operator+(const LaurentPoly& a, const LaurentPoly& b) { return add(a, b, 1.0); }
  friend LaurentPoly operator-(const LaurentPoly& a, const LaurentPoly& b) { return add(a, b, -1.0); }
  friend LaurentPoly operator-(const LaurentPoly& a) { return a * T(-1.0); }

  friend LaurentPoly operator*(const LaurentPoly& a, const LaurentPoly& b) {
    if (a.is_zero() || b.is_zero()) return {};
    std::vector<T> c(a.c_.size() + b.c_.size() - 1, T(0.0));
    for (std::size_t i = 0; i < a.c_.size(); ++i)
      for (std::size_t j = 0; j < b.c_.size(); ++j) c[i + j] += a.c_[i] * b.c_[j];
    return LaurentPoly(a.low_ + b.low_, std::move(c));
  }
  friend LaurentPoly operator*(LaurentPoly a, const T& s) {
    for (auto& x : a.c_) x = x * s;
    a.trim();
    return a;
  }
  friend LaurentPoly operator*(const T& s, LaurentPoly a) { return a * s; }

  // Multiplication by z^n.
  LaurentPoly shifted(int n) const {
    LaurentPoly r = *this;
    r.low_ += n;
    return r;
  }

 private:
  static LaurentPoly add(const LaurentPoly& a, const LaurentPoly& b, double sb) {
    if (a.is_zero()) return b * T(sb);
    if (b.is_zero()) return a;
    int lo = std::min(a.low_, b.low_), hi = std::max(a.high(), b.high());
    std::vector<T> c(hi - lo + 1, T(0.0));
    for (int n = a.low_; n <= a.high(); ++n) c[n - lo] += a.c_[n - a.low_];
    for (int n = b.low_; n <= b.high(); ++n) c[n - lo] += b.c_[n - b.low_] * sb;
    return LaurentPoly(lo, std::move(c));
  }

  void trim() {
    std::size_t b = 0, e = c_.size();
    while (b < e && is_exact_zero(c_[b])) ++b;
    while (e > b && is_exact_zero(c_[e - 1])) --e;
    if (b == e) {
      c_.clear();
      low_ = 0;
      return;
    }
    c_ = std::vector<T>(c_.begin() + b, c_.begin() + e);
    low_ += static_cast<int>(b);
  }

  int low_ = 0;
  std::vector<T> c_;
};

enum class SubstMode { scale, invert, negate };

// p(c z), p(1/z) or p(-z).
template <class T>
LaurentPoly<T> substitute(const LaurentPoly<T>& p, SubstMode mode, cplx c = 1.0) {
  if (p.is_zero()) return p;
  std::vector<T> out(p.coeffs().size(), T(0.0));
  int lo = p.low(), hi = p.high();
  switch (mode) {
    case SubstMode::scale:
      for (int n = lo; n <= hi; ++n) out[n - lo] = p.coeff(n) * ipow(c, n);
      return LaurentPoly<T>(lo, out);
    case SubstMode::invert:
      for (int n = lo; n <= hi; ++n) out[hi - n] = p.coeff(n);
      return LaurentPoly<T>(-hi, out);
    case SubstMode::negate:
      for (int n = lo; n <= hi; ++n) out[n - lo] = (n % 2 == 0) ? p.coeff(n) : -p.coeff(n);
      return LaurentPoly<T>(lo, out);
  }
  return p;
}

// f = f_sigma + f_plus with f_sigma(z) = f_sigma(1/z) and f_plus in z C[z].
template <class T>
std::pair<LaurentPoly<T>, LaurentPoly<T>> sigma_plus_decompose(const LaurentPoly<T>& f) {
  if (f.is_zero()) return {f, f};
  int m = std::max(-f.low(), 0);
  int hp = std::max(f.high(), m);
  std::vector<T> sig(2 * m + 1, T(0.0));
  sig[m] = f.coeff(0);
  for (int n = 1; n <= m; ++n) sig[m + n] = sig[m - n] = f.coeff(-n);
  std::vector<T> plus(std::max(hp, 0) + 1, T(0.0));
  for (int n = 1; n <= hp; ++n) plus[n] = f.coeff(n) - f.coeff(-n);
  return {LaurentPoly<T>(-m, sig), LaurentPoly<T>(0, plus)};
}

// Exact Laurent division; fails if the remainder is not negligible.
template <class T>
LaurentPoly<T> divide_exact(const LaurentPoly<T>& num, const LaurentPoly<T>& den, double tol = 1e-10) {
  if (den.is_zero()) throw Error(ErrorKind::domain, "division by the zero Laurent polynomial");
  if (num.is_zero()) return num;
  std::vector<T> r = num.coeffs();
  const auto& d = den.coeffs();
  int dn = static_cast<int>(d.size()) - 1;
  int nq = static_cast<int>(r.size()) - dn;
  if (nq <= 0) throw Error(ErrorKind::divisibility, "numerator degree span below divisor span");
  std::vector<T> q(nq, T(0.0));
  for (int i = nq - 1; i >= 0; --i) {
    q[i] = r[i + dn] / d[dn];
    for (int j = 0; j <= dn; ++j) r[i + j] -= q[i] * d[j];
  }
  double rem = 0.0;
  for (int i = 0; i < dn; ++i) rem = std::max(rem, std::abs(value_of(r[i])));
  if (rem > tol * num.max_abs())
    throw Error(ErrorKind::divisibility, "remainder " + std::to_string(rem) + " exceeds tolerance");
  return LaurentPoly<T>(num.low() - den.low(), q);
}

template <class T>
using Mat2 = std::array<std::array<T, 2>, 2>;

template <class T>
struct LaurentMatrix {
  LaurentPoly<T> a, b, c, d;

  static LaurentMatrix identity() {
    auto one = LaurentPoly<T>::constant(T(1.0));
    return {one, {}, {}, one};
  }

  const LaurentPoly<T>& at(int i, int j) const { return i == 0 ? (j == 0 ? a : b) : (j == 0 ? c : d); }

  Mat2<T> eval(cplx z) const { return {{{a.eval(z), b.eval(z)}, {c.eval(z), d.eval(z)}}}; }

  LaurentPoly<T> trace() const { return a + d; }
  LaurentPoly<T> det() const { return a * d - b * c; }
};

template <class T>
LaurentMatrix<T> matmul(const LaurentMatrix<T>& x, const LaurentMatrix<T>& y) {
  return {x.a * y.a + x.b * y.c, x.a * y.b + x.b * y.d, x.c * y.a + x.d * y.c, x.c * y.b + x.d * y.d};
}

template <class T>
LaurentMatrix<T> substitute(const LaurentMatrix<T>& m, SubstMode mode, cplx c = 1.0) {
  return {substitute(m.a, mode, c), substitute(m.b, mode, c), substitute(m.c, mode, c), substitute(m.d, mode, c)};
}

inline Eigen::Matrix2cd to_eigen(const Mat2<cplx>& m) {
  Eigen::Matrix2cd r;
  r << m[0][0], m[0][1], m[1][0], m[1][1];
  return r;
}

// Polynomial in lambda = z^2 + z^-2, coefficients in increasing degree.
template <class T>
struct LambdaPoly {
  std::vector<T> c;

  int degree() const { return static_cast<int>(c.size()) - 1; }
  T leading() const { return c.back(); }

  template <class S>
  auto eval(const S& lam) const {
    using R = std::conditional_t<is_dual_v<T> || is_dual_v<S>, Dual, cplx>;
    R r(0.0);
    for (int i = degree(); i >= 0; --i) r = r * lam + c[i];
    return r;
  }

  LambdaPoly derivative() const {
    LambdaPoly d;
    for (int i = 1; i <= degree(); ++i) d.c.push_back(c[i] * double(i));
    if (d.c.empty()) d.c.push_back(T(0.0));
    return d;
  }

  std::vector<cplx> values() const {
    std::vector<cplx> v;
    for (auto& x : c) v.push_back(value_of(x));
    return v;
  }
};

// q_m with q_m(z^2 + z^-2) = z^{2m} + z^{-2m}.
inline LambdaPoly<cplx> chebyshev_q(int m) {
  std::vector<cplx> q0{2.0}, q1{0.0, 1.0};
  if (m == 0) return {q0};
  for (int k = 1; k < m; ++k) {
    std::vector<cplx> q2(k + 2, 0.0);
    for (int i = 0; i <= k; ++i) q2[i + 1] += q1[i];
    for (std::size_t i = 0; i < q0.size(); ++i) q2[i] -= q0[i];
    q0 = q1;
    q1 = q2;
  }
  return {q1};
}

template <class T>
LambdaPoly<T> to_lambda(const LaurentPoly<T>& p, double tol = 1e-10) {
  if (p.is_zero()) return {{T(0.0)}};
  double scale = p.max_abs();
  int m = std::max(std::abs(p.low()), std::abs(p.high()));
  for (int n = -m; n <= m; ++n) {
    double bad = (n % 2 != 0) ? std::abs(value_of(p.coeff(n))) : std::abs(value_of(p.coeff(n) - p.coeff(-n)));
    if (bad > tol * scale) throw Error(ErrorKind::symmetry, "Laurent polynomial is not even and inversion-symmetric");
  }
  int top = m / 2;
  LambdaPoly<T> q{std::vector<T>(top + 1, T(0.0))};
  q.c[0] = p.coeff(0);
  for (int k = 1; k <= top; ++k) {
    T a = (p.coeff(2 * k) + p.coeff(-2 * k)) * 0.5;
    auto ch = chebyshev_q(k);
    for (int i = 0; i <= k; ++i) q.c[i] += a * ch.c[i];
  }
  return q;
}

// q(z^2 + z^-2) as a Laurent polynomial.
template <class T>
LaurentPoly<T> from_lambda(const LambdaPoly<T>& q) {
  LaurentPoly<T> lam(-2, {T(1.0), T(0.0), T(0.0), T(0.0), T(1.0)});
  LaurentPoly<T> r;
  for (int i = q.degree(); i >= 0; --i) r = r * lam + LaurentPoly<T>::constant(q.c[i]);
  return r;
}

}  // namespace xxzr
