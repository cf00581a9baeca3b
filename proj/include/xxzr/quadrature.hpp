#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <limits>
#include <queue>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "dual.hpp"
#include "error.hpp"

namespace xxzr {

using VecFn = std::function<Eigen::VectorXcd(double)>;

struct QuadStats {
  long evaluations = 0;
  double error = 0.0;
  int intervals = 0;
};

namespace detail {

struct GkPanel {
  double a, b;
  Eigen::VectorXcd value;
  double error;
  double magnitude;  // Kronrod estimate of the integral of |f| (largest component)
  bool operator<(const GkPanel& o) const { return error < o.error; }
};

inline GkPanel gk15(const VecFn& f, double a, double b, long& evals) {
  using boost::math::quadrature::gauss;
  using boost::math::quadrature::gauss_kronrod;
  const auto& x = gauss_kronrod<double, 15>::abscissa();
  const auto& wk = gauss_kronrod<double, 15>::weights();
  const auto& wg = gauss<double, 7>::weights();
  double c = 0.5 * (a + b), h = 0.5 * (b - a);
  Eigen::VectorXcd f0 = f(c);
  Eigen::VectorXcd k = wk[0] * f0, g = wg[0] * f0;
  Eigen::VectorXd m = wk[0] * f0.cwiseAbs();
  evals += 1;
  for (std::size_t i = 1; i < x.size(); ++i) {
    Eigen::VectorXcd fl = f(c - h * x[i]), fr = f(c + h * x[i]);
    Eigen::VectorXcd s = fl + fr;
    evals += 2;
    k += wk[i] * s;
    m += wk[i] * (fl.cwiseAbs() + fr.cwiseAbs());
    if (i % 2 == 0) g += wg[i / 2] * s;
  }
  GkPanel p{a, b, h * k, 0.0, std::abs(h) * m.maxCoeff()};
  p.error = (h * (k - g)).cwiseAbs().maxCoeff();
  if (!p.value.allFinite()) p.error = std::numeric_limits<double>::infinity();
  return p;
}

inline std::string fmt_sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

}  // namespace detail

// Globally adaptive Gauss-Kronrod 7/15 for vector-valued integrands sharing evaluations.
// Besides abs_tol and rel_tol, convergence is declared at the rounding floor 50 eps int |f|,
// or when the error has stagnated below 1e-8 int |f| for many subdivisions (rounding-limited,
// typically a pole close to the path where the integrand itself carries amplified noise).
inline Eigen::VectorXcd integrate_adaptive(const VecFn& f, double a, double b, double abs_tol, double rel_tol = 1e-12,
                                           int max_intervals = 4000, QuadStats* stats = nullptr) {
  long evals = 0;
  std::priority_queue<detail::GkPanel> heap;
  auto first = detail::gk15(f, a, b, evals);
  Eigen::VectorXcd total = first.value;
  double err = first.error, mag = first.magnitude;
  heap.push(first);
  int count = 1;
  const double floor_factor = 50.0 * std::numeric_limits<double>::epsilon();
  double best = err;
  int stalled = 0;
  while (err > std::max({abs_tol, rel_tol * total.cwiseAbs().maxCoeff(), floor_factor * mag})) {
    if (err < 0.5 * best) {
      best = err;
      stalled = 0;
    } else if (++stalled > 256 && err < 1e-8 * std::max(1.0, mag)) {
      break;
    }
    if (count >= max_intervals || !std::isfinite(err))
      throw Error(ErrorKind::period, "quadrature did not converge (estimated error " + detail::fmt_sci(err) + ", " + std::to_string(count) + " intervals)");
    auto worst = heap.top();
    heap.pop();
    double m = 0.5 * (worst.a + worst.b);
    auto l = detail::gk15(f, worst.a, m, evals);
    auto r = detail::gk15(f, m, worst.b, evals);
    total += l.value + r.value - worst.value;
    err += l.error + r.error - worst.error;
    mag += l.magnitude + r.magnitude - worst.magnitude;
    heap.push(l);
    heap.push(r);
    ++count;
    if (count % 64 == 0) {
      // Resum to shed accumulated cancellation error.
      auto h = heap;
      total.setZero();
      err = 0.0;
      mag = 0.0;
      while (!h.empty()) {
        total += h.top().value;
        err += h.top().error;
        mag += h.top().magnitude;
        h.pop();
      }
    }
  }
  if (stats) {
    stats->evaluations += evals;
    stats->error = std::max(stats->error, err);
    stats->intervals += count;
  }
  return total;
}

inline cplx integrate_adaptive_scalar(const std::function<cplx(double)>& f, double a, double b, double abs_tol,
                                      double rel_tol = 1e-12) {
  VecFn g = [&](double t) {
    Eigen::VectorXcd v(1);
    v[0] = f(t);
    return v;
  };
  return integrate_adaptive(g, a, b, abs_tol, rel_tol)[0];
}

// Composite 20-point Gauss-Legendre; nodes are visited in increasing order so the
// integrand may carry continuation state (log branches, root choices).
inline Eigen::VectorXcd integrate_panels_ordered(const VecFn& f, double a, double b, int panels) {
  using boost::math::quadrature::gauss;
  const auto& x = gauss<double, 20>::abscissa();
  const auto& w = gauss<double, 20>::weights();
  std::vector<std::pair<double, double>> nodes;
  for (std::size_t i = x.size(); i-- > 0;) nodes.push_back({-x[i], w[i]});
  for (std::size_t i = 0; i < x.size(); ++i) nodes.push_back({x[i], w[i]});
  Eigen::VectorXcd total;
  double h = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    double c = a + (p + 0.5) * h;
    for (auto& [xi, wi] : nodes) {
      Eigen::VectorXcd v = f(c + 0.5 * h * xi);
      if (total.size() == 0) total = Eigen::VectorXcd::Zero(v.size());
      total += (0.5 * h * wi) * v;
    }
  }
  return total;
}

}  // namespace xxzr
