#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "monodromy.hpp"

namespace xxzr {

template <class T>
T hamiltonian(const PhasePointT<T>& x, const ModelParams& p, int k) {
  return hamiltonians_from_numerator(monodromy_numerator(x, p), p.N)[k];
}

// Components {x_c, P_k}(x) over the 3N complex coordinates.
inline Eigen::VectorXcd vector_field(const PhasePoint& x, int k, const ModelParams& p) {
  if (k < 0 || k > p.N) throw Error(ErrorKind::domain, "hamiltonian index out of range");
  auto g = gradient([&](const PhasePointT<Dual>& y) { return hamiltonian(y, p, k); }, x);
  auto v = hamiltonian_field(g, x);
  if (!v.allFinite()) throw Error(ErrorKind::degenerate, "non-finite vector field");
  return v;
}

// Drifts are measured relative to 1 + |initial value|.
struct IntegratorDiagnostics {
  long rhs_evaluations = 0;
  double max_casimir_drift = 0;
  double max_hamiltonian_drift = 0;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<PhasePoint> states;
  int hamiltonian_index = 0;
  IntegratorDiagnostics diagnostics;
};

namespace detail {

using RealState = std::vector<double>;

inline RealState to_real(const PhasePoint& x) {
  RealState r;
  for (auto c : flatten(x)) {
    r.push_back(c.real());
    r.push_back(c.imag());
  }
  return r;
}

inline PhasePoint from_real(const RealState& r) {
  std::vector<cplx> v;
  for (std::size_t i = 0; i + 1 < r.size(); i += 2) v.emplace_back(r[i], r[i + 1]);
  return unflatten(v);
}

// Integrates dx/ds = sign * X(x) and records states at the increasing s-values.
inline std::vector<PhasePoint> run_dopri(const PhasePoint& x0, int k, const ModelParams& p, double sign,
                                         const std::vector<double>& svals, double tol, long& evals) {
  namespace ode = boost::numeric::odeint;
  RealState x = to_real(x0);
  double last_t = 0.0;
  auto sys = [&](const RealState& s, RealState& ds, double t) {
    last_t = t;
    ++evals;
    // Trial stages far off the trajectory get a huge slope so the step is rejected.
    bool wild = false;
    for (double c : s) wild = wild || !(std::abs(c) < 1e8);
    Eigen::VectorXcd v;
    if (!wild) {
      try {
        v = vector_field(from_real(s), k, p);
      } catch (const Error&) {
        wild = true;
      }
      wild = wild || !v.allFinite();
    }
    if (wild) {
      ds.assign(s.size(), 1e100);
      return;
    }
    ds.resize(s.size());
    for (int i = 0; i < v.size(); ++i) {
      ds[2 * i] = sign * v[i].real();
      ds[2 * i + 1] = sign * v[i].imag();
    }
  };
  std::vector<double> ts{0.0};
  for (double s : svals)
    if (s > 0.0) ts.push_back(s);
  std::vector<PhasePoint> out;
  if (ts.size() > 1) {
    auto stepper = ode::make_dense_output(tol, tol, ode::runge_kutta_dopri5<RealState>());
    std::vector<PhasePoint> rec;
    try {
      ode::integrate_times(stepper, sys, x, ts.begin(), ts.end(), 1e-3,
                           [&](const RealState& s, double) { rec.push_back(from_real(s)); },
                           ode::max_step_checker(20000));
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw Error(ErrorKind::integration, std::string("step control failed near t = ") + std::to_string(sign * last_t) + ": " + e.what());
    }
    for (auto& s : rec)
      for (auto& site : s.sites)
        if (!std::isfinite(std::abs(site.e) + std::abs(site.f) + std::abs(site.k)))
          throw Error(ErrorKind::integration, "state blew up near t = " + std::to_string(sign * last_t));
    out.assign(rec.begin() + 1, rec.end());
  }
  std::vector<PhasePoint> res;
  std::size_t j = 0;
  for (double s : svals) res.push_back(s > 0.0 ? out[j++] : x0);
  return res;
}

}  // namespace detail

// Adaptive Dormand-Prince 5(4) with dense output at the requested times.
inline Trajectory integrate_flow(const PhasePoint& x0, const ModelParams& p, int k, std::vector<double> times,
                                 double tol = 1e-10) {
  if (!(tol > 0.0)) throw Error(ErrorKind::domain, "tolerance must be positive");
  if (times.empty()) throw Error(ErrorKind::domain, "no sample times");
  for (std::size_t i = 1; i < times.size(); ++i)
    if (!(times[i] > times[i - 1])) throw Error(ErrorKind::domain, "sample times must be strictly increasing");
  Trajectory tr;
  tr.hamiltonian_index = k;
  tr.times = times;
  std::vector<double> fwd, bwd;
  for (double t : times) (t >= 0.0 ? fwd : bwd).push_back(std::abs(t));
  std::reverse(bwd.begin(), bwd.end());
  long evals = 0;
  auto back = detail::run_dopri(x0, k, p, -1.0, bwd, tol, evals);
  auto forw = detail::run_dopri(x0, k, p, 1.0, fwd, tol, evals);
  tr.states.assign(back.rbegin(), back.rend());
  tr.states.insert(tr.states.end(), forw.begin(), forw.end());
  tr.diagnostics.rhs_evaluations = evals;
  auto w0 = casimirs(x0);
  auto h0 = reflection_monodromy(x0, p, false).hamiltonians;
  for (auto& s : tr.states) {
    auto w = casimirs(s);
    auto h = reflection_monodromy(s, p, false).hamiltonians;
    for (int j = 0; j < p.N; ++j)
      tr.diagnostics.max_casimir_drift = std::max(tr.diagnostics.max_casimir_drift, std::abs(w[j] - w0[j]) / (1.0 + std::abs(w0[j])));
    for (int j = 0; j <= p.N; ++j)
      tr.diagnostics.max_hamiltonian_drift = std::max(tr.diagnostics.max_hamiltonian_drift, std::abs(h[j] - h0[j]) / (1.0 + std::abs(h0[j])));
  }
  return tr;
}

inline Trajectory integrate_flow(const PhasePoint& x0, const ModelParams& p, int k, double t_end, double tol = 1e-10,
                                 int samples = 11) {
  std::vector<double> ts;
  for (int i = 0; i < samples; ++i) ts.push_back(t_end * i / (samples - 1));
  if (t_end < 0) std::reverse(ts.begin(), ts.end());
  return integrate_flow(x0, p, k, ts, tol);
}

template <class R>
std::vector<R> flow_observable(const Trajectory& tr, const std::function<R(const PhasePoint&)>& obs) {
  std::vector<R> out;
  out.reserve(tr.states.size());
  for (auto& s : tr.states) out.push_back(obs(s));
  return out;
}

inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
  int N = tr.states.empty() ? 0 : tr.states.front().size();
  os << "t";
  for (int j = 1; j <= N; ++j)
    for (const char* v : {"e", "f", "k"}) os << ",re_" << v << j << ",im_" << v << j;
  os << "\n";
  os.precision(17);
  for (std::size_t i = 0; i < tr.times.size(); ++i) {
    os << tr.times[i];
    for (auto c : flatten(tr.states[i])) os << "," << c.real() << "," << c.imag();
    os << "\n";
  }
}

}  // namespace xxzr
