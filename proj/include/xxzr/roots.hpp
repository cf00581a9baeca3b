#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "dual.hpp"
#include "error.hpp"

namespace xxzr {

inline cplx poly_eval(const std::vector<cplx>& c, cplx x) {
  cplx r = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) r = r * x + *it;
  return r;
}

inline cplx poly_deriv_eval(const std::vector<cplx>& c, cplx x) {
  cplx r = 0.0;
  for (int i = static_cast<int>(c.size()) - 1; i >= 1; --i) r = r * x + double(i) * c[i];
  return r;
}

// Parlett-Reinsch balancing with power-of-two scalings.
inline void balance(Eigen::MatrixXcd& A) {
  const int n = static_cast<int>(A.rows());
  bool done = false;
  while (!done) {
    done = true;
    for (int i = 0; i < n; ++i) {
      double c = 0, r = 0;
      for (int j = 0; j < n; ++j)
        if (j != i) {
          c += std::abs(A(j, i));
          r += std::abs(A(i, j));
        }
      if (c == 0 || r == 0) continue;
      double f = 1, s = c + r;
      while (c < r / 2) { c *= 2; r /= 2; f *= 2; }
      while (c >= r * 2) { c /= 2; r *= 2; f /= 2; }
      if ((c + r) < 0.95 * s) {
        done = false;
        A.row(i) /= f;
        A.col(i) *= f;
      }
    }
  }
}

// Roots of sum c_i x^i via balanced companion-matrix eigenvalues and Newton polish.
inline std::vector<cplx> polynomial_roots(const std::vector<cplx>& c, int newton_steps = 2) {
  int n = static_cast<int>(c.size()) - 1;
  if (n < 0 || c.back() == cplx(0.0)) throw Error(ErrorKind::domain, "polynomial has zero leading coefficient");
  if (n == 0) return {};
  Eigen::MatrixXcd C = Eigen::MatrixXcd::Zero(n, n);
  for (int i = 1; i < n; ++i) C(i, i - 1) = 1.0;
  for (int i = 0; i < n; ++i) C(i, n - 1) = -c[i] / c[n];
  balance(C);
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(C, false);
  std::vector<cplx> r(es.eigenvalues().data(), es.eigenvalues().data() + n);
  for (auto& x : r)
    for (int s = 0; s < newton_steps; ++s) {
      // Accept a step only if it reduces |p|; near multiple roots p' ~ 0 amplifies rounding noise.
      cplx d = poly_deriv_eval(c, x);
      if (d == cplx(0.0)) break;
      cplx nx = x - poly_eval(c, x) / d;
      if (!(std::abs(poly_eval(c, nx)) < std::abs(poly_eval(c, x)))) break;
      x = nx;
    }
  return r;
}

}  // namespace xxzr
