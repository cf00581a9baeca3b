#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "roots.hpp"

namespace xxzr {

// C(z)/(z + 1/z) written in lambda = z^2 + z^-2.
template <class T>
LambdaPoly<T> c_tilde(const ReflectionData<T>& data) {
  LaurentPoly<T> den(-2, {T(-1.0), T(0.0), T(0.0), T(0.0), T(1.0)});
  LambdaPoly<T> q;
  try {
    q = to_lambda(divide_exact(data.numerator.c, den));
  } catch (const Error& e) {
    throw Error(ErrorKind::symmetry, std::string("C(z) lacks the expected symmetry: ") + e.what());
  }
  q.c.resize(data.params.N, T(0.0));
  if (std::abs(value_of(q.leading())) < 1e-10) throw Error(ErrorKind::degenerate, "Q vanishes; degenerate divisor");
  return q;
}

// p(z) at a point z carrying its own gradient (first order in both).
template <class T>
T eval_at(const LaurentPoly<T>& p, const T& z) {
  cplx z0 = value_of(z);
  T r = p.eval(z0);
  if constexpr (is_dual_v<T>) {
    cplx dp = 0.0;
    for (int n = p.low(); n <= p.high(); ++n)
      if (n != 0) dp += double(n) * value_of(p.coeff(n)) * std::pow(z0, n - 1);
    for (int i = 0; i < kMaxVars; ++i) r.d[i] += dp * z.d[i];
  }
  return r;
}

template <class T>
struct SovChartT {
  T bigQ{};
  T bigP{};
  std::vector<T> lambdas, ws, zs, zetas, ys;
  int size() const { return static_cast<int>(lambdas.size()); }
};

using SovChart = SovChartT<cplx>;

namespace detail {

template <class T>
void fill_point(SovChartT<T>& ch, const ReflectionData<T>& data, const T& lam, cplx w0, cplx z0) {
  T w = implicit_value(w0, lam, w0 * w0 / (w0 * w0 - 1.0));
  T z = implicit_value(z0, w, 0.5 / z0);
  T zi = T(1.0) / z;
  T den = z - zi;
  T A = eval_at(data.numerator.a, z) / den;
  T D = eval_at(data.numerator.d, z) / den;
  ch.lambdas.push_back(lam);
  ch.ws.push_back(w);
  ch.zs.push_back(z);
  ch.zetas.push_back(A);
  ch.ys.push_back((A - D) * 0.5);
}

inline double min_gap(const std::vector<cplx>& r) {
  double g = 1e300;
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = i + 1; j < r.size(); ++j) g = std::min(g, std::abs(r[i] - r[j]));
  return g;
}

template <class T>
std::vector<cplx> chart_roots(const LambdaPoly<T>& ct) {
  auto roots = polynomial_roots(ct.values());
  double scale = 1.0;
  for (auto r : roots) scale = std::max(scale, std::abs(r));
  if (roots.size() > 1 && min_gap(roots) < 1e-6 * scale) throw Error(ErrorKind::degenerate, "root collision in C~");
  return roots;
}

template <class T>
T root_with_gradient(const LambdaPoly<T>& ct, cplx r) {
  T seed = ct.eval(r);
  cplx dp = poly_deriv_eval(ct.values(), r);
  return implicit_value(r, seed, -1.0 / dp);
}

}  // namespace detail

// Separation variables at x: roots of C~ with |w| <= 1 and z = sqrt(w).
template <class T>
SovChartT<T> sov_chart(const PhasePointT<T>& x, const ModelParams& p) {
  auto data = reflection_monodromy(x, p, false);
  auto ct = c_tilde(data);
  SovChartT<T> ch;
  ch.bigQ = ct.leading();
  ch.bigP = data.bigP;
  for (cplx r : detail::chart_roots(ct)) {
    cplx s = std::sqrt(r * r - 4.0);
    cplx w0 = (r - s) / 2.0, w1 = (r + s) / 2.0;
    if (std::abs(std::abs(w0) - 1.0) < 1e-12) {
      if (std::abs(w0 - w1) < 1e-12 || std::abs(w0.real() - w1.real()) < 1e-14)
        throw Error(ErrorKind::degenerate, "|w| = 1 branch tie at lambda = " + std::to_string(r.real()));
      if (w0.real() < w1.real()) std::swap(w0, w1);
    } else if (std::abs(w0) > 1.0) {
      std::swap(w0, w1);
    }
    detail::fill_point(ch, data, detail::root_with_gradient(ct, r), w0, std::sqrt(w0));
  }
  return ch;
}

inline SovChart sov_chart(const PhasePoint& x, const ModelParams& p) { return sov_chart<cplx>(x, p); }

struct LogCanonicalReport {
  Eigen::MatrixXcd brackets;
  Eigen::MatrixXcd expected;
  double max_residual = 0;
};

// Brackets among (Q, w_1..w_g, P, zeta_1..zeta_g) against {w_k,zeta_j} = 2 delta w zeta, {Q,P} = 2QP.
inline LogCanonicalReport verify_log_canonical(const PhasePoint& x, const ModelParams& p) {
  auto ch = sov_chart(seed_duals(x), p);
  int g = ch.size(), n = num_vars(x);
  std::vector<Dual> c{ch.bigQ};
  c.insert(c.end(), ch.ws.begin(), ch.ws.end());
  c.push_back(ch.bigP);
  c.insert(c.end(), ch.zetas.begin(), ch.zetas.end());
  int m = static_cast<int>(c.size());
  LogCanonicalReport rep;
  rep.brackets.resize(m, m);
  rep.expected = Eigen::MatrixXcd::Zero(m, m);
  std::vector<Eigen::VectorXcd> grads;
  for (auto& d : c) grads.push_back(gradient_of(d, n));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) rep.brackets(i, j) = bracket_of_gradients(grads[i], grads[j], x);
  auto setpair = [&](int i, int j) {
    cplx v = 2.0 * c[i].v * c[j].v;
    rep.expected(i, j) = v;
    rep.expected(j, i) = -v;
  };
  setpair(0, g + 1);
  for (int k = 0; k < g; ++k) setpair(1 + k, g + 2 + k);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      double sc = std::abs(c[i].v * c[j].v) + 1e-300;
      rep.max_residual = std::max(rep.max_residual, std::abs(rep.brackets(i, j) - rep.expected(i, j)) / sc);
    }
  return rep;
}

// Rebuilds a chart from given root order and w-branch hints, for continuation.
inline SovChart chart_continued(const PhasePoint& x, const ModelParams& p, const SovChart& prev) {
  auto data = reflection_monodromy(x, p, false);
  auto ct = c_tilde(data);
  auto roots = detail::chart_roots(ct);
  int g = static_cast<int>(roots.size());
  std::vector<int> perm(g);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double bestd = 1e300;
  do {
    double d = 0;
    for (int k = 0; k < g; ++k) d += std::abs(roots[perm[k]] - prev.lambdas[k]);
    if (d < bestd) {
      bestd = d;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  SovChart ch;
  ch.bigQ = ct.leading();
  ch.bigP = data.bigP;
  for (int k = 0; k < g; ++k) {
    cplx r = roots[best[k]];
    cplx s = std::sqrt(r * r - 4.0);
    cplx w0 = (r - s) / 2.0, w1 = (r + s) / 2.0;
    if (std::abs(w1 - prev.ws[k]) < std::abs(w0 - prev.ws[k])) w0 = w1;
    cplx z0 = std::sqrt(w0);
    if (std::abs(-z0 - prev.zs[k]) < std::abs(z0 - prev.zs[k])) z0 = -z0;
    detail::fill_point<cplx>(ch, data, r, w0, z0);
  }
  return ch;
}

// Nearest-neighbour continuation of the divisor along a trajectory, refining
// intervals where the roots move more than half their separation.
inline std::vector<SovChart> divisor_track(const Trajectory& tr, const ModelParams& p, double tol = 1e-10,
                                           int max_depth = 12) {
  std::vector<SovChart> out;
  if (tr.states.empty()) return out;
  out.push_back(sov_chart(tr.states[0], p));
  std::function<SovChart(const PhasePoint&, double, double, const SovChart&, const PhasePoint&, int)> step;
  step = [&](const PhasePoint& x0, double t0, double t1, const SovChart& prev, const PhasePoint& x1, int depth) -> SovChart {
    auto next = chart_continued(x1, p, prev);
    double motion = 0;
    for (int k = 0; k < prev.size(); ++k) motion = std::max(motion, std::abs(next.lambdas[k] - prev.lambdas[k]));
    double gap = prev.size() > 1 ? detail::min_gap(prev.lambdas) : 1e300;
    double wmotion = 0;
    for (int k = 0; k < prev.size(); ++k) wmotion = std::max(wmotion, std::abs(next.ws[k] - prev.ws[k]));
    double scale = 1.0;
    for (auto l : prev.lambdas) scale = std::max(scale, std::abs(l));
    bool ok = motion < 0.5 * gap && motion < 1e-1 * scale && wmotion < 0.25;
    if (ok) return next;
    if (depth >= max_depth)
      throw Error(ErrorKind::tracking, "ambiguous divisor matching near t = " + std::to_string(t1));
    double tm = 0.5 * (t0 + t1);
    auto mid = integrate_flow(x0, p, tr.hamiltonian_index, std::vector<double>{0.0, tm - t0}, tol).states[1];
    auto cm = step(x0, t0, tm, prev, mid, depth + 1);
    return step(mid, tm, t1, cm, x1, depth + 1);
  };
  for (std::size_t i = 1; i < tr.states.size(); ++i)
    out.push_back(step(tr.states[i - 1], tr.times[i - 1], tr.times[i], out.back(), tr.states[i], 0));
  return out;
}

}  // namespace xxzr
