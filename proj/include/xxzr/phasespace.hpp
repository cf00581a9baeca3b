#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dual.hpp"
#include "error.hpp"

namespace xxzr {

template <class T>
struct SiteState {
  T e{}, f{}, k{1.0};
};

template <class T>
struct PhasePointT {
  std::vector<SiteState<T>> sites;
  int size() const { return static_cast<int>(sites.size()); }
};

using PhasePoint = PhasePointT<cplx>;

enum class OrderingMode { as_printed, reversed };

inline const char* ordering_name(OrderingMode m) {
  return m == OrderingMode::reversed ? "reversed" : "as_printed";
}

struct ModelParams {
  int N = 1;
  cplx xi{1.0};
  std::vector<cplx> a{cplx(1.0)};
  OrderingMode ordering = OrderingMode::reversed;
};

// Collects non-fatal genericity warnings (xi = +-1, omega_j = a_j^2 + a_j^-2).
inline std::vector<std::string> validate(const ModelParams& p, const PhasePoint* x = nullptr) {
  if (p.N < 1) throw Error(ErrorKind::config, "N must be positive");
  if (static_cast<int>(p.a.size()) != p.N) throw Error(ErrorKind::config, "need exactly N inhomogeneities");
  if (p.xi == cplx(0.0)) throw Error(ErrorKind::config, "xi must be nonzero");
  for (auto& a : p.a)
    if (a == cplx(0.0)) throw Error(ErrorKind::config, "inhomogeneities must be nonzero");
  std::vector<std::string> warn;
  if (std::abs(p.xi - 1.0) < 1e-12 || std::abs(p.xi + 1.0) < 1e-12) warn.push_back("xi = +-1 is non-generic");
  if (x) {
    if (x->size() != p.N) throw Error(ErrorKind::invalid_state, "phase point length differs from N");
    for (int j = 0; j < p.N; ++j) {
      auto& s = x->sites[j];
      if (s.k == cplx(0.0)) throw Error(ErrorKind::invalid_state, "k = 0 at site " + std::to_string(j));
      cplx w = s.k * s.k + 1.0 / (s.k * s.k) + s.e * s.f;
      cplx a2 = p.a[j] * p.a[j];
      if (std::abs(w - a2 - 1.0 / a2) < 1e-10) warn.push_back("omega_j = a_j^2 + a_j^-2 at site " + std::to_string(j));
    }
  }
  return warn;
}

template <class T>
T casimir(const SiteState<T>& s) {
  if (value_of(s.k) == cplx(0.0)) throw Error(ErrorKind::invalid_state, "k = 0");
  T k2 = s.k * s.k;
  return k2 + T(1.0) / k2 + s.e * s.f;
}

// Per-site Poisson tensor, rows and columns ordered (e, f, k).
inline Eigen::Matrix3cd structure_matrix(const SiteState<cplx>& s) {
  if (s.k == cplx(0.0)) throw Error(ErrorKind::invalid_state, "k = 0");
  Eigen::Matrix3cd P = Eigen::Matrix3cd::Zero();
  P(0, 1) = 2.0 * (s.k * s.k - 1.0 / (s.k * s.k));
  P(0, 2) = -s.k * s.e;
  P(1, 2) = s.k * s.f;
  P(1, 0) = -P(0, 1);
  P(2, 0) = -P(0, 2);
  P(2, 1) = -P(1, 2);
  return P;
}

inline int num_vars(const PhasePoint& x) { return 3 * x.size(); }

inline std::vector<cplx> flatten(const PhasePoint& x) {
  std::vector<cplx> v;
  v.reserve(3 * x.size());
  for (auto& s : x.sites) {
    v.push_back(s.e);
    v.push_back(s.f);
    v.push_back(s.k);
  }
  return v;
}

inline PhasePoint unflatten(const std::vector<cplx>& v) {
  PhasePoint x;
  for (std::size_t i = 0; i + 2 < v.size(); i += 3) x.sites.push_back({v[i], v[i + 1], v[i + 2]});
  return x;
}

// Lifts a point to dual numbers with one seed direction per coordinate.
inline PhasePointT<Dual> seed_duals(const PhasePoint& x) {
  if (num_vars(x) > kMaxVars) throw Error(ErrorKind::domain, "too many phase variables for the dual type");
  PhasePointT<Dual> y;
  int i = 0;
  for (auto& s : x.sites) {
    SiteState<Dual> t;
    t.e = Dual::variable(s.e, i++);
    t.f = Dual::variable(s.f, i++);
    t.k = Dual::variable(s.k, i++);
    y.sites.push_back(t);
  }
  return y;
}

inline Eigen::VectorXcd gradient_of(const Dual& d, int n) {
  Eigen::VectorXcd g(n);
  for (int i = 0; i < n; ++i) g[i] = d.d[i];
  return g;
}

template <class F>
Eigen::VectorXcd gradient(F&& f, const PhasePoint& x) {
  Dual r = f(seed_duals(x));
  return gradient_of(r, num_vars(x));
}

// Central differences along real steps; valid because observables are holomorphic.
template <class F>
Eigen::VectorXcd gradient_fd(F&& f, const PhasePoint& x) {
  auto v = flatten(x);
  Eigen::VectorXcd g(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double h = 1e-6 * (1.0 + std::abs(v[i]));
    auto up = v, dn = v;
    up[i] += h;
    dn[i] -= h;
    g[i] = (f(unflatten(up)) - f(unflatten(dn))) / (2.0 * h);
  }
  return g;
}

// Contracts two gradients with the block-diagonal Poisson tensor.
inline cplx bracket_of_gradients(const Eigen::VectorXcd& gF, const Eigen::VectorXcd& gG, const PhasePoint& x) {
  cplx r = 0.0;
  for (int j = 0; j < x.size(); ++j) {
    Eigen::Matrix3cd P = structure_matrix(x.sites[j]);
    r += (gF.segment<3>(3 * j).transpose() * P * gG.segment<3>(3 * j))(0, 0);
  }
  return r;
}

// Hamiltonian vector field X_H with components {x_c, H}.
inline Eigen::VectorXcd hamiltonian_field(const Eigen::VectorXcd& gH, const PhasePoint& x) {
  Eigen::VectorXcd v(gH.size());
  for (int j = 0; j < x.size(); ++j) v.segment<3>(3 * j) = structure_matrix(x.sites[j]) * gH.segment<3>(3 * j);
  return v;
}

template <class F, class G>
cplx poisson_bracket(F&& f, G&& g, const PhasePoint& x) {
  return bracket_of_gradients(gradient(f, x), gradient(g, x), x);
}

// Deterministic uniform doubles in [0,1) from a 64-bit engine.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  cplx annulus(double rmin, double rmax) {
    double r = std::exp(uniform(std::log(rmin), std::log(rmax)));
    double t = uniform(0.0, 2.0 * std::numbers::pi);
    return std::polar(r, t);
  }
  cplx disk(double r) { return cplx(uniform(-r, r), uniform(-r, r)); }

 private:
  std::mt19937_64 eng_;
};

// Samples a point on the symplectic leaf {omega_j = leaf_j}; e and k are drawn
// from the annulus rmin <= |.| <= rmax.
inline PhasePoint sample_leaf(const std::vector<cplx>& leaf, std::uint64_t seed, double rmin = 0.5, double rmax = 2.0) {
  Rng rng(seed);
  PhasePoint x;
  for (auto w : leaf) {
    cplx e;
    do e = rng.annulus(rmin, rmax);
    while (std::abs(e) < 1e-3);
    cplx k = rng.annulus(rmin, rmax);
    cplx f = (w - k * k - 1.0 / (k * k)) / e;
    x.sites.push_back({e, f, k});
  }
  return x;
}

template <class T>
std::vector<T> casimirs(const PhasePointT<T>& x) {
  std::vector<T> w;
  for (auto& s : x.sites) w.push_back(casimir(s));
  return w;
}

}  // namespace xxzr
