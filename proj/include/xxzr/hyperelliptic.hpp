#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dual.hpp"
#include "error.hpp"
#include "quadrature.hpp"
#include "roots.hpp"

namespace xxzr {

// A point (lambda, y) of y^2 = q(lambda); infinity = +1/-1 marks the points over lambda = oo.
struct CurvePoint {
  cplx lam{};
  cplx y{};
  int infinity = 0;
};

// Numerators n(lambda) of differentials n(lambda) dlambda / y, evaluated together.
using Numerators = std::function<Eigen::VectorXcd(cplx)>;

// y^2 = q(lambda), deg q = 2g + 2, with cuts joining consecutive sorted branch points.
// Sheet 1 is y1 = lead * prod_i (l - a_i) sqrt((l - b_i)/(l - a_i)), so y1 ~ lead * l^{g+1} at infinity.
class HyperellipticCurve {
 public:
  HyperellipticCurve() = default;

  HyperellipticCurve(std::vector<cplx> q, cplx lead) : q_(std::move(q)), lead_(lead) {
    int n = static_cast<int>(q_.size()) - 1;
    if (n < 2 || n % 2 != 0) throw Error(ErrorKind::domain, "hyperelliptic polynomial must have even degree >= 2");
    if (std::abs(lead_ * lead_ - q_.back()) > 1e-9 * std::abs(q_.back()))
      throw Error(ErrorKind::domain, "leading square root is inconsistent with the polynomial");
    branch_ = polynomial_roots(q_, 3);
    std::sort(branch_.begin(), branch_.end(), [](cplx a, cplx b) {
      return a.real() != b.real() ? a.real() < b.real() : a.imag() < b.imag();
    });
    scale_ = 1.0;
    for (auto b : branch_) scale_ = std::max(scale_, std::abs(b));
    double gap = 1e300;
    for (std::size_t i = 0; i < branch_.size(); ++i)
      for (std::size_t j = i + 1; j < branch_.size(); ++j) gap = std::min(gap, std::abs(branch_[i] - branch_[j]));
    // A double root splits into a pair about sqrt(eps) apart under eigenvalue rounding.
    if (gap < 1e-7 * scale_)
      throw Error(ErrorKind::singular_curve, "repeated branch points (separation " + detail::fmt_sci(gap) + ")");
  }

  int genus() const { return static_cast<int>(branch_.size()) / 2 - 1; }
  int cut_count() const { return static_cast<int>(branch_.size()) / 2; }
  const std::vector<cplx>& poly() const { return q_; }
  const std::vector<cplx>& branch_points() const { return branch_; }
  cplx lead() const { return lead_; }
  double scale() const { return scale_; }
  cplx cut_start(int i) const { return branch_[2 * i]; }
  cplx cut_end(int i) const { return branch_[2 * i + 1]; }

  cplx q(cplx lam) const { return poly_eval(q_, lam); }

  // Sheet-1 value with lambda = branch[idx] + delta; the offset is used exactly.
  cplx y1_near(int idx, cplx delta) const {
    cplx lam = idx >= 0 ? branch_[idx] + delta : delta;
    cplx r = lead_;
    for (int i = 0; i < cut_count(); ++i) {
      cplx da = (2 * i == idx) ? delta : lam - branch_[2 * i];
      cplx db = (2 * i + 1 == idx) ? delta : lam - branch_[2 * i + 1];
      if (da == cplx(0.0)) return 0.0;
      r *= da * std::sqrt(db / da);
    }
    return r;
  }
  cplx y1(cplx lam) const { return y1_near(-1, lam); }

  // Sheet-1 value on the left side of cut i at lambda = a + (b - a) s, 0 < s < 1.
  cplx y1_left(int i, double s) const {
    cplx a = cut_start(i), b = cut_end(i);
    cplx lam = a + (b - a) * s;
    cplx r = lead_ * cplx(0.0, 1.0) * (b - a) * std::sqrt(s * (1.0 - s));
    for (int j = 0; j < cut_count(); ++j)
      if (j != i) r *= other_factor(j, lam);
    return r;
  }

  cplx other_factor(int j, cplx lam) const {
    cplx da = lam - branch_[2 * j], db = lam - branch_[2 * j + 1];
    return da * std::sqrt(db / da);
  }

  // Real parameter t in (0, 1) at which p0 + t (p1 - p0) crosses cut i, if it does.
  std::optional<double> crossing(cplx p0, cplx p1, int i) const {
    cplx d = p1 - p0, e = cut_end(i) - cut_start(i), r = cut_start(i) - p0;
    double det = -d.real() * e.imag() + e.real() * d.imag();
    if (std::abs(det) < 1e-14 * std::abs(d) * std::abs(e)) return std::nullopt;
    double t = (-r.real() * e.imag() + e.real() * r.imag()) / det;
    double s = (d.real() * r.imag() - d.imag() * r.real()) / det;
    if (t > 1e-12 && t < 1.0 - 1e-12 && s > 0.0 && s < 1.0) return t;
    return std::nullopt;
  }

 private:
  std::vector<cplx> q_;
  std::vector<cplx> branch_;
  cplx lead_{};
  double scale_ = 1.0;
};

inline double point_segment_distance(cplx p, cplx a, cplx b) {
  cplx d = b - a;
  double n = std::norm(d);
  if (n == 0.0) return std::abs(p - a);
  double t = std::clamp(((p - a) * std::conj(d)).real() / n, 0.0, 1.0);
  return std::abs(p - (a + t * d));
}

namespace detail {

inline double smoothstep(double u) { return u * u * (3.0 - 2.0 * u); }

inline double smoothstep_inverse(double t) {
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 80; ++i) {
    double m = 0.5 * (lo + hi);
    (smoothstep(m) < t ? lo : hi) = m;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

// Integral of n dlambda / y along the straight segment p0 -> p1. sigma is the sheet sign
// (y = sigma * y1) at p0 and is updated at cut crossings. idx0/idx1 name branch points
// sitting at the endpoints (or -1); the smoothstep parametrization absorbs their
// square-root behaviour.
inline Eigen::VectorXcd segment_integral(const HyperellipticCurve& C, const Numerators& f, cplx p0, int idx0, cplx p1,
                                         int idx1, int& sigma, double tol, QuadStats* stats = nullptr) {
  std::vector<double> ts;
  for (int i = 0; i < C.cut_count(); ++i)
    if (auto t = C.crossing(p0, p1, i)) ts.push_back(*t);
  std::sort(ts.begin(), ts.end());
  std::vector<double> us{0.0};
  for (double t : ts) us.push_back(detail::smoothstep_inverse(t));
  us.push_back(1.0);
  cplx d = p1 - p0;
  Eigen::VectorXcd total;
  for (std::size_t k = 0; k + 1 < us.size(); ++k) {
    int s = sigma;
    VecFn g = [&](double u) -> Eigen::VectorXcd {
      double phi = detail::smoothstep(u), dphi = 6.0 * u * (1.0 - u);
      cplx y;
      if (u < 0.5 && idx0 >= 0)
        y = C.y1_near(idx0, d * phi);
      else if (u >= 0.5 && idx1 >= 0)
        y = C.y1_near(idx1, -d * ((1.0 - u) * (1.0 - u) * (1.0 + 2.0 * u)));
      else
        y = C.y1(p0 + d * phi);
      cplx lam = p0 + d * phi;
      return f(lam) * (d * dphi / (double(s) * y));
    };
    Eigen::VectorXcd v = integrate_adaptive(g, us[k], us[k + 1], tol, 1e-13, 4000, stats);
    total = total.size() ? Eigen::VectorXcd(total + v) : v;
    if (k + 2 < us.size()) sigma = -sigma;
  }
  return total;
}

// Integral along the left side of cut i from a_i to b_i on sheet 1 (Chebyshev substitution).
inline Eigen::VectorXcd cut_left_integral(const HyperellipticCurve& C, const Numerators& f, int i, double tol,
                                          QuadStats* stats = nullptr) {
  cplx a = C.cut_start(i), b = C.cut_end(i);
  VecFn g = [&](double th) -> Eigen::VectorXcd {
    double s = std::sin(0.5 * th);
    s *= s;
    cplx lam = a + (b - a) * s;
    cplx den = C.lead() * cplx(0.0, 1.0);
    for (int j = 0; j < C.cut_count(); ++j)
      if (j != i) den *= C.other_factor(j, lam);
    return f(lam) / den;
  };
  return integrate_adaptive(g, 0.0, std::numbers::pi, tol, 1e-13, 4000, stats);
}

// Integral on sheet 1 along the straight gap from b_m to a_{m+1}.
inline Eigen::VectorXcd gap_integral(const HyperellipticCurve& C, const Numerators& f, int m, double tol,
                                     QuadStats* stats = nullptr) {
  int s = 1;
  return segment_integral(C, f, C.cut_end(m), 2 * m + 1, C.cut_start(m + 1), 2 * m + 2, s, tol, stats);
}

// Canonical basis: A_i loops counterclockwise around cut i (i < g) on sheet 1; B_i runs on
// sheet 1 from cut i to the last cut along the gaps, passing the intermediate cuts on
// their right sides (where sheet-1 values are the negatives of the left-side ones, so
// those stretches cancel against the return on sheet 2). b_sign orients B so that
// A_i . B_i = +1; with this orientation B_i . B_j = 0 as well.
struct HomologyBasis {
  std::vector<std::pair<cplx, cplx>> cuts;
  int b_sign = -1;
  double scale = 1.0;
  double clearance = 0.0;
  int genus() const { return static_cast<int>(cuts.size()) - 1; }
};

inline HomologyBasis homology_basis(const HyperellipticCurve& C) {
  HomologyBasis hb;
  hb.scale = C.scale();
  for (int i = 0; i < C.cut_count(); ++i) hb.cuts.push_back({C.cut_start(i), C.cut_end(i)});
  double sep = 1e300;
  for (int i = 0; i < C.cut_count(); ++i)
    for (int j = 0; j < C.cut_count(); ++j) {
      if (i == j) continue;
      sep = std::min(sep, point_segment_distance(C.cut_start(j), C.cut_start(i), C.cut_end(i)));
      sep = std::min(sep, point_segment_distance(C.cut_end(j), C.cut_start(i), C.cut_end(i)));
    }
  // Gaps must not run through other cuts or branch points.
  for (int m = 0; m + 1 < C.cut_count(); ++m) {
    cplx p0 = C.cut_end(m), p1 = C.cut_start(m + 1);
    for (int j = 0; j < static_cast<int>(C.branch_points().size()); ++j)
      if (j != 2 * m + 1 && j != 2 * m + 2) sep = std::min(sep, point_segment_distance(C.branch_points()[j], p0, p1));
    for (int i = 0; i < C.cut_count(); ++i)
      if (C.crossing(p0, p1, i)) sep = 0.0;
  }
  hb.clearance = sep;
  if (sep < 1e-6 * C.scale()) throw Error(ErrorKind::basis, "cuts are pathologically clustered");
  return hb;
}

// Raw A- and B-periods of a family of differentials (rows: cycles, columns: forms).
struct RawPeriods {
  Eigen::MatrixXcd A, B;
  QuadStats stats;
};

inline RawPeriods raw_periods(const HyperellipticCurve& C, const HomologyBasis& hb, const Numerators& f, int m,
                              double tol) {
  int g = C.genus();
  RawPeriods rp;
  rp.A = Eigen::MatrixXcd::Zero(g, m);
  rp.B = Eigen::MatrixXcd::Zero(g, m);
  std::vector<Eigen::VectorXcd> left, gap;
  for (int i = 0; i < g; ++i) {
    left.push_back(cut_left_integral(C, f, i, tol, &rp.stats));
    gap.push_back(gap_integral(C, f, i, tol, &rp.stats));
  }
  for (int i = 0; i < g; ++i) {
    rp.A.row(i) = -2.0 * left[i].transpose();
    Eigen::VectorXcd b = Eigen::VectorXcd::Zero(m);
    for (int k = i; k < g; ++k) b += 2.0 * gap[k];
    rp.B.row(i) = double(hb.b_sign) * b.transpose();
  }
  return rp;
}

// Integral of n dlambda / y from the base branch point e_1 to a point. The path is a
// straight segment (or a two-segment detour around branch points and along cut 0);
// the sheet is tracked through cut crossings and the final sign is matched to p.y.
inline Eigen::VectorXcd abel_integral(const HyperellipticCurve& C, const Numerators& f, const CurvePoint& p, double tol,
                                      QuadStats* stats = nullptr) {
  const auto& br = C.branch_points();
  cplx e1 = br[0];
  double margin = 1e-3 * C.scale();
  if (p.infinity != 0) {
    // Leftward ray to infinity on sheet 1, which ends at the point where y ~ +lead lambda^{g+1}.
    VecFn g = [&](double u) -> Eigen::VectorXcd {
      double v = 1.0 - u;
      double s = (u / v) * (u / v);
      cplx lam = e1 - s;
      cplx y = C.y1_near(0, cplx(-s));
      return f(lam) * (-2.0 * u / (v * v * v) / y);
    };
    Eigen::VectorXcd r = integrate_adaptive(g, 0.0, 1.0, tol, 1e-13, 4000, stats);
    return p.infinity > 0 ? r : Eigen::VectorXcd(-r);
  }
  int target_idx = -1;
  for (int j = 0; j < static_cast<int>(br.size()); ++j)
    if (std::abs(p.lam - br[j]) < 1e-12 * C.scale()) target_idx = j;
  if (target_idx == 0) {
    Eigen::VectorXcd z = f(e1);
    return Eigen::VectorXcd::Zero(z.size());
  }
  // Targets may sit close to a branch point; the clearance shrinks with that distance.
  for (int j = 1; j < static_cast<int>(br.size()); ++j)
    if (j != target_idx) margin = std::min(margin, 0.3 * std::abs(p.lam - br[j]));
  auto clear = [&](cplx a, int ia, cplx b, int ib) {
    for (int j = 0; j < static_cast<int>(br.size()); ++j)
      if (j != ia && j != ib && point_segment_distance(br[j], a, b) < margin) return false;
    if (ia == 0) {
      cplx d = b - a, e = C.cut_end(0) - a;
      double ang = std::abs(std::arg(d / e));
      if (ang < 1e-3) return false;
    }
    for (int i = 0; i < C.cut_count(); ++i) {
      if (auto t = C.crossing(a, b, i)) {
        cplx x = a + (b - a) * *t;
        if (std::abs(x - C.cut_start(i)) < margin || std::abs(x - C.cut_end(i)) < margin) return false;
      }
    }
    return true;
  };
  std::vector<cplx> way;
  if (!clear(e1, 0, p.lam, target_idx)) {
    cplx mid = 0.5 * (e1 + p.lam), d = p.lam - e1;
    if (std::abs(d) < margin) d = margin;
    bool found = false;
    for (double s : {0.3, -0.3, 0.6, -0.6, 1.0, -1.0, 0.15, -0.15, 2.0, -2.0, 4.0, -4.0}) {
      cplx w = mid + cplx(0.0, s) * d;
      if (clear(e1, 0, w, -1) && clear(w, -1, p.lam, target_idx)) {
        way.push_back(w);
        found = true;
        break;
      }
    }
    if (!found) throw Error(ErrorKind::path, "no admissible integration path to lambda = " + std::to_string(p.lam.real()));
  }
  int sigma = 1;
  Eigen::VectorXcd r;
  if (way.empty()) {
    r = segment_integral(C, f, e1, 0, p.lam, target_idx, sigma, tol, stats);
  } else {
    r = segment_integral(C, f, e1, 0, way[0], -1, sigma, tol, stats);
    r += segment_integral(C, f, way[0], -1, p.lam, target_idx, sigma, tol, stats);
  }
  if (target_idx >= 0) return r;
  cplx yend = double(sigma) * C.y1(p.lam);
  return std::abs(p.y - yend) <= std::abs(p.y + yend) ? r : Eigen::VectorXcd(-r);
}

// Nearest-lattice-point reduction of v modulo Z^g + B Z^g (Babai rounding).
struct LatticeReduction {
  Eigen::VectorXcd reduced;
  Eigen::VectorXd n, m;
};

inline LatticeReduction reduce_lattice(const Eigen::VectorXcd& v, const Eigen::MatrixXcd& B) {
  Eigen::MatrixXd ImB = B.imag();
  Eigen::VectorXd y = ImB.ldlt().solve(v.imag());
  Eigen::VectorXd m = y.array().round().matrix();
  Eigen::VectorXcd v1 = v - B * m.cast<cplx>();
  Eigen::VectorXd n = v1.real().array().round().matrix();
  LatticeReduction r;
  r.reduced = v1 - n.cast<cplx>();
  r.n = n;
  r.m = m;
  return r;
}

}  // namespace xxzr
