#pragma once

// Forward-mode multi-dual numbers over the complex field. Every observable in
// the library is holomorphic in the phase variables, so a single complex
// derivative per variable is enough.

#include <array>
#include <cmath>
#include <complex>
#include <type_traits>

namespace xxzr {

using cplx = std::complex<double>;

inline constexpr int kMaxVars = 12;

struct Dual {
  cplx v{};
  std::array<cplx, kMaxVars> d{};

  Dual() = default;
  Dual(double x) : v(x) {}
  Dual(cplx x) : v(x) {}

  static Dual variable(cplx x, int i) {
    Dual r(x);
    r.d[i] = 1.0;
    return r;
  }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    for (int i = 0; i < kMaxVars; ++i) d[i] += o.d[i];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    for (int i = 0; i < kMaxVars; ++i) d[i] -= o.d[i];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    for (int i = 0; i < kMaxVars; ++i) d[i] = d[i] * o.v + v * o.d[i];
    v *= o.v;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    cplx inv = 1.0 / o.v;
    cplx q = v * inv;
    for (int i = 0; i < kMaxVars; ++i) d[i] = (d[i] - q * o.d[i]) * inv;
    v = q;
    return *this;
  }
};

inline Dual operator-(Dual a) {
  a.v = -a.v;
  for (auto& x : a.d) x = -x;
  return a;
}
inline Dual operator+(Dual a, const Dual& b) { return a += b; }
inline Dual operator-(Dual a, const Dual& b) { return a -= b; }
inline Dual operator*(Dual a, const Dual& b) { return a *= b; }
inline Dual operator/(Dual a, const Dual& b) { return a /= b; }

// Scalar mixes avoid paying for a full gradient product.
inline Dual operator*(Dual a, cplx s) {
  a.v *= s;
  for (auto& x : a.d) x *= s;
  return a;
}
inline Dual operator*(cplx s, Dual a) { return a * s; }
inline Dual operator*(Dual a, double s) { return a * cplx(s); }
inline Dual operator*(double s, Dual a) { return a * cplx(s); }
inline Dual operator/(Dual a, cplx s) { return a * (1.0 / s); }
inline Dual operator/(Dual a, double s) { return a * cplx(1.0 / s); }
inline Dual operator/(cplx s, const Dual& b) { return Dual(s) / b; }
inline Dual operator/(double s, const Dual& b) { return Dual(s) / b; }
inline Dual operator+(Dual a, cplx s) { a.v += s; return a; }
inline Dual operator+(cplx s, Dual a) { a.v += s; return a; }
inline Dual operator-(Dual a, cplx s) { a.v -= s; return a; }
inline Dual operator-(cplx s, const Dual& a) { return -a + s; }
inline Dual operator+(Dual a, double s) { a.v += s; return a; }
inline Dual operator+(double s, Dual a) { a.v += s; return a; }
inline Dual operator-(Dual a, double s) { a.v -= s; return a; }
inline Dual operator-(double s, const Dual& a) { return -a + s; }

// Chain rule for a scalar function with value fv and derivative df at a.v.
inline Dual apply_chain(const Dual& a, cplx fv, cplx df) {
  Dual r(fv);
  for (int i = 0; i < kMaxVars; ++i) r.d[i] = df * a.d[i];
  return r;
}

inline Dual sqrt(const Dual& a) {
  cplx s = std::sqrt(a.v);
  return apply_chain(a, s, 0.5 / s);
}
inline Dual log(const Dual& a) { return apply_chain(a, std::log(a.v), 1.0 / a.v); }
inline Dual exp(const Dual& a) {
  cplx e = std::exp(a.v);
  return apply_chain(a, e, e);
}

template <class T>
inline constexpr bool is_dual_v = std::is_same_v<std::decay_t<T>, Dual>;

inline cplx value_of(const cplx& x) { return x; }
inline cplx value_of(const Dual& x) { return x.v; }

// Builds a T carrying the given value and the gradient of `seed` scaled by `factor`.
// Used for implicitly defined quantities such as polynomial roots.
template <class T>
T implicit_value(cplx value, const T& seed, cplx factor) {
  if constexpr (is_dual_v<T>) {
    Dual r(value);
    for (int i = 0; i < kMaxVars; ++i) r.d[i] = factor * seed.d[i];
    return r;
  } else {
    (void)seed;
    (void)factor;
    return value;
  }
}

template <class T>
T ipow(T x, int n) {
  if (n < 0) return T(1.0) / ipow(x, -n);
  T r(1.0);
  while (n) {
    if (n & 1) r = r * x;
    x = x * x;
    n >>= 1;
  }
  return r;
}

}  // namespace xxzr
