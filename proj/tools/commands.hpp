#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include <xxzr/dynamics.hpp>
#include <xxzr/identities.hpp>
#include <xxzr/theta.hpp>

namespace xxzr::cli {

using json = nlohmann::ordered_json;

// ---- Configuration ----

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Tolerances {
  double ode = 1e-10;
  double quadrature = 1e-11;
  double identity = 1e-9;
  double conservation = 1e-8;
  double log_canonical = 1e-8;
  double gradient = 1e-6;
  double linearization = 0.0;  // 0: 1e-6 for N = 2, 1e-4 for N >= 3
  double theta = 0.0;          // 0: same rule as linearization
  double reconstruction = 1e-5;
  double rho = 1e-6;

  double by_genus(double v, int N) const { return v > 0.0 ? v : (N <= 2 ? 1e-6 : 1e-4); }
};

struct RunConfig {
  ModelParams model;
  std::vector<cplx> omega;       // leaf targets; empty: drawn from the seed
  std::optional<PhasePoint> sites;  // explicit first phase point
  std::uint64_t seed = 1;
  std::vector<double> times;
  int hamiltonian_index = 1;
  Tolerances tol;
  int points = 10;
  int z_samples = 10;
  double annulus_min = 0.8, annulus_max = 1.25;
  std::string negative_control = "none";
  std::string output_dir = "out";
  std::string canonical;  // normalized config text, hashed into the report
};

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

inline double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw ConfigError(where + ": expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(where + ": not finite");
  return v;
}

inline double positive(const json& j, const std::string& where) {
  double v = number(j, where);
  if (!(v > 0.0)) throw ConfigError(where + ": must be positive");
  return v;
}

inline int integer(const json& j, const std::string& where, int lo, int hi) {
  if (!j.is_number_integer()) throw ConfigError(where + ": expected an integer");
  long long v = j.get<long long>();
  if (v < lo || v > hi) throw ConfigError(where + ": out of range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return static_cast<int>(v);
}

// A complex number is a plain number or [re, im].
inline cplx complex(const json& j, const std::string& where) {
  if (j.is_number()) return {number(j, where), 0.0};
  if (j.is_array() && j.size() == 2) return {number(j[0], where + "[0]"), number(j[1], where + "[1]")};
  throw ConfigError(where + ": expected a number or [re, im]");
}

inline std::vector<cplx> complex_list(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected a list");
  std::vector<cplx> v;
  for (std::size_t i = 0; i < j.size(); ++i) v.push_back(complex(j[i], where + "[" + std::to_string(i) + "]"));
  return v;
}

}  // namespace detail

inline RunConfig parse_config(const json& j) {
  using namespace detail;
  check_keys(j, "config", {"model", "leaf", "seed", "times", "hamiltonian_index", "tolerances", "samples",
                           "negative_control", "output_dir"});
  RunConfig c;
  if (!j.contains("model")) throw ConfigError("config: missing 'model'");
  const auto& m = j["model"];
  check_keys(m, "model", {"N", "xi", "a", "ordering_mode"});
  if (!m.contains("N")) throw ConfigError("model: missing 'N'");
  c.model.N = integer(m["N"], "model.N", 1, 6);
  c.model.xi = m.contains("xi") ? complex(m["xi"], "model.xi") : cplx(1.0);
  if (std::abs(c.model.xi) == 0.0) throw ConfigError("model.xi: must be nonzero");
  c.model.a.assign(c.model.N, cplx(1.0));
  if (m.contains("a")) {
    c.model.a = complex_list(m["a"], "model.a");
    if (static_cast<int>(c.model.a.size()) != c.model.N) throw ConfigError("model.a: expected N entries");
    for (auto a : c.model.a)
      if (std::abs(a) == 0.0) throw ConfigError("model.a: entries must be nonzero");
  }
  if (m.contains("ordering_mode")) {
    if (!m["ordering_mode"].is_string()) throw ConfigError("model.ordering_mode: expected a string");
    auto s = m["ordering_mode"].get<std::string>();
    if (s == "reversed") c.model.ordering = OrderingMode::reversed;
    else if (s == "as_printed") c.model.ordering = OrderingMode::as_printed;
    else throw ConfigError("model.ordering_mode: expected 'reversed' or 'as_printed'");
  }
  if (j.contains("leaf")) {
    const auto& l = j["leaf"];
    check_keys(l, "leaf", {"omega", "sites"});
    if (l.contains("omega") == l.contains("sites")) throw ConfigError("leaf: give exactly one of 'omega' or 'sites'");
    if (l.contains("omega")) {
      c.omega = complex_list(l["omega"], "leaf.omega");
      if (static_cast<int>(c.omega.size()) != c.model.N) throw ConfigError("leaf.omega: expected N entries");
    } else {
      const auto& s = l["sites"];
      if (!s.is_array() || static_cast<int>(s.size()) != c.model.N) throw ConfigError("leaf.sites: expected N sites");
      PhasePoint x;
      for (std::size_t i = 0; i < s.size(); ++i) {
        std::string w = "leaf.sites[" + std::to_string(i) + "]";
        check_keys(s[i], w, {"e", "f", "k"});
        for (const char* key : {"e", "f", "k"})
          if (!s[i].contains(key)) throw ConfigError(w + ": missing '" + key + "'");
        cplx k = complex(s[i]["k"], w + ".k");
        if (std::abs(k) == 0.0) throw ConfigError(w + ".k: must be nonzero");
        x.sites.push_back({complex(s[i]["e"], w + ".e"), complex(s[i]["f"], w + ".f"), k});
      }
      c.sites = x;
      c.omega = casimirs(x);
    }
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ConfigError("seed: expected a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("times")) {
    const auto& t = j["times"];
    if (t.is_array()) {
      for (std::size_t i = 0; i < t.size(); ++i) c.times.push_back(number(t[i], "times[" + std::to_string(i) + "]"));
    } else {
      check_keys(t, "times", {"t_end", "samples"});
      if (!t.contains("t_end")) throw ConfigError("times: missing 't_end'");
      double te = number(t["t_end"], "times.t_end");
      int n = t.contains("samples") ? integer(t["samples"], "times.samples", 1, 100000) : 11;
      for (int i = 0; i < n; ++i) c.times.push_back(n == 1 ? 0.0 : te * i / (n - 1));
    }
    for (std::size_t i = 1; i < c.times.size(); ++i)
      if (!(c.times[i] > c.times[i - 1])) throw ConfigError("times: must be strictly increasing");
  } else {
    for (int i = 0; i <= 10; ++i) c.times.push_back(0.1 * i);
  }
  if (j.contains("hamiltonian_index"))
    c.hamiltonian_index = integer(j["hamiltonian_index"], "hamiltonian_index", 0, c.model.N);
  if (j.contains("tolerances")) {
    const auto& t = j["tolerances"];
    check_keys(t, "tolerances", {"ode", "quadrature", "identity", "conservation", "log_canonical", "gradient",
                                 "linearization", "theta", "reconstruction", "rho"});
    auto set = [&](const char* key, double& v) {
      if (t.contains(key)) v = positive(t[key], std::string("tolerances.") + key);
    };
    set("ode", c.tol.ode);
    set("quadrature", c.tol.quadrature);
    set("identity", c.tol.identity);
    set("conservation", c.tol.conservation);
    set("log_canonical", c.tol.log_canonical);
    set("gradient", c.tol.gradient);
    set("linearization", c.tol.linearization);
    set("theta", c.tol.theta);
    set("reconstruction", c.tol.reconstruction);
    set("rho", c.tol.rho);
  }
  if (j.contains("samples")) {
    const auto& s = j["samples"];
    check_keys(s, "samples", {"points", "z", "annulus"});
    if (s.contains("points")) c.points = integer(s["points"], "samples.points", 1, 10000);
    if (s.contains("z")) c.z_samples = integer(s["z"], "samples.z", 1, 10000);
    if (s.contains("annulus")) {
      const auto& a = s["annulus"];
      if (!a.is_array() || a.size() != 2) throw ConfigError("samples.annulus: expected [rmin, rmax]");
      c.annulus_min = positive(a[0], "samples.annulus[0]");
      c.annulus_max = positive(a[1], "samples.annulus[1]");
      if (!(c.annulus_max >= c.annulus_min)) throw ConfigError("samples.annulus: rmax < rmin");
    }
  }
  if (j.contains("negative_control")) {
    if (!j["negative_control"].is_string()) throw ConfigError("negative_control: expected a string");
    c.negative_control = j["negative_control"].get<std::string>();
    if (c.negative_control != "none" && c.negative_control != "corrupt_normalization")
      throw ConfigError("negative_control: expected 'none' or 'corrupt_normalization'");
  }
  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string()) throw ConfigError("output_dir: expected a string");
    c.output_dir = j["output_dir"].get<std::string>();
  }
  c.canonical = j.dump();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

// ---- Sampling ----

inline std::uint64_t mix(std::uint64_t seed, std::uint64_t i, std::uint64_t tag) {
  return seed * 1000003ULL + i * 7919ULL + tag;
}

inline std::vector<cplx> leaf_for(const RunConfig& c, int i) {
  if (!c.omega.empty()) return c.omega;
  Rng rng(mix(c.seed, i, 1));
  std::vector<cplx> w;
  for (int j = 0; j < c.model.N; ++j) w.push_back(2.0 + rng.disk(1.5));
  return w;
}

inline PhasePoint point_for(const RunConfig& c, int i) {
  if (i == 0 && c.sites) return *c.sites;
  return sample_leaf(leaf_for(c, i), mix(c.seed, i, 2), c.annulus_min, c.annulus_max);
}

// Generic spectral parameters away from z^4 = 1 and the real axis.
inline std::vector<cplx> z_samples(std::uint64_t seed, int n) {
  Rng rng(seed);
  std::vector<cplx> z;
  for (int i = 0; i < n; ++i) z.push_back(rng.annulus(0.6, 1.6) * std::exp(cplx(0.0, 0.05)));
  return z;
}

// Thread count from XXZR_THREADS (default 1). Work items are independent and results are
// written by index, so output does not depend on the thread count.
inline int thread_count() {
  if (const char* s = std::getenv("XXZR_THREADS")) {
    int n = std::atoi(s);
    if (n >= 1) return std::min(n, 256);
  }
  return 1;
}

inline void parallel_for(int n, const std::function<void(int)>& fn) {
  int nt = std::min(thread_count(), n);
  if (nt <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errs(n);
  std::vector<std::thread> pool;
  for (int t = 0; t < nt; ++t)
    pool.emplace_back([&, t] {
      for (int i = t; i < n; i += nt) {
        try {
          fn(i);
        } catch (...) {
          errs[i] = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

// ---- Reports ----

inline json to_json(cplx z) { return json::array({z.real(), z.imag()}); }

inline json to_json(const std::vector<cplx>& v) {
  json a = json::array();
  for (auto z : v) a.push_back(to_json(z));
  return a;
}

inline json to_json(const Eigen::VectorXcd& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(to_json(v[i]));
  return a;
}

inline json to_json(const Eigen::MatrixXcd& m) {
  json a = json::array();
  for (int i = 0; i < m.rows(); ++i) a.push_back(to_json(Eigen::VectorXcd(m.row(i).transpose())));
  return a;
}

inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline std::string hex64(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

// FNV-1a, a stable content hash for provenance.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

class Report {
 public:
  Report(std::string command, const RunConfig& c) : command_(std::move(command)) {
    j_["command"] = command_;
    j_["provenance"] = {{"config_hash", hex64(fnv1a(c.canonical))}, {"seed", c.seed}};
    j_["model"] = {{"N", c.model.N},
                   {"xi", to_json(c.model.xi)},
                   {"a", to_json(c.model.a)},
                   {"ordering_mode", ordering_name(c.model.ordering)}};
    j_["warnings"] = json::array();
    for (auto& w : validate(c.model)) j_["warnings"].push_back(w);
    j_["checks"] = json::array();
    j_["data"] = json::object();
  }

  // residual <= tolerance
  void check(const std::string& name, double residual, double tolerance) { add(name, residual, tolerance, "<=", residual <= tolerance); }
  // value >= threshold (non-degeneracy conditions)
  void check_above(const std::string& name, double value, double threshold) { add(name, value, threshold, ">=", value >= threshold); }

  json& data() { return j_["data"]; }
  void warn(const std::string& w) { j_["warnings"].push_back(w); }
  void set_stage(const std::string& s) { stage_ = s; }
  const std::string& stage() const { return stage_; }

  void fail(const std::string& kind, const std::string& message) {
    j_["error"] = {{"stage", stage_}, {"kind", kind}, {"message", message}};
    error_ = true;
  }

  bool all_pass() const {
    if (error_) return false;
    for (auto& c : j_["checks"])
      if (!c["pass"].get<bool>()) return false;
    return true;
  }

  json finish() {
    j_["status"] = error_ ? "error" : (all_pass() ? "pass" : "fail");
    return j_;
  }

  double worst(const std::string& prefix) const {
    double w = 0.0;
    for (auto& c : j_["checks"])
      if (c["name"].get<std::string>().rfind(prefix, 0) == 0) {
        if (c["residual"].is_null()) return INFINITY;
        w = std::max(w, c["residual"].get<double>());
      }
    return w;
  }

 private:
  void add(const std::string& name, double v, double t, const char* cmp, bool pass) {
    j_["checks"].push_back({{"name", name}, {"residual", num(v)}, {"tolerance", t}, {"comparison", cmp}, {"pass", pass && std::isfinite(v)}});
  }

  std::string command_, stage_ = "setup";
  json j_;
  bool error_ = false;
};

// ---- Shared pipeline pieces ----

inline double rel(cplx a, cplx b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
}

inline std::string csv_num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Geometry {
  SpectralCurve curve;
  PeriodData pd;
};

inline Geometry build_geometry(const RunConfig& c, const PhasePoint& x, Report& rep) {
  rep.set_stage("curve");
  Geometry g;
  g.curve = curve_from_point(x, c.model);
  rep.set_stage("periods");
  g.pd = periods(g.curve, homology_basis(g.curve.hc), c.tol.quadrature);
  return g;
}

inline void corrupt_normalization(PeriodData& pd) {
  int N = pd.N;
  pd.norm(0, 0) *= 1.1;
  pd.norm(N - 1, 0) *= 1.1;
  pd.c[0] *= 1.1;
}

// ---- Commands ----

inline void cmd_verify(const RunConfig& c, Report& rep, const std::filesystem::path&) {
  const auto& p = c.model;
  struct Row {
    double det_l = 0, l_sym = 0, rtt = 0, t_sym = 0, det_t = 0, refl = 0, brackets = 0, tt = 0, parity = 0, sum_rule = 0,
           big_p = 0, log_canonical = 0, lax = 0;
  };
  std::vector<Row> rows(c.points);
  rep.set_stage("identities");
  std::vector<std::string> raised(c.points);
  parallel_for(c.points, [&](int i) {
    auto x = point_for(c, i);
    auto zs = z_samples(mix(c.seed, i, 3), 2);
    cplx z1 = zs[0], z2 = zs[1];
    Row r;
    // A check that raises (e.g. a non-divisible numerator under the wrong ordering) counts as failed.
    auto safe = [&](double& slot, const std::function<double()>& f) {
      try {
        slot = std::max(slot, f());
      } catch (const Error& e) {
        slot = INFINITY;
        if (raised[i].empty()) raised[i] = e.what();
      }
    };
    for (auto& s : x.sites) {
      safe(r.det_l, [&] { return std::max(det_l_residual(s, z1), det_l_residual(s, z2)); });
      safe(r.l_sym, [&] { return std::max(l_symmetry_residual(s, z1), l_symmetry_residual(s, z2)); });
      safe(r.rtt, [&] { return rtt_residual(s, z1, z2); });
    }
    safe(r.refl, [&] { return reflection_algebra_residual(x, p, z1, z2); });
    safe(r.brackets, [&] { return explicit_brackets_residual(x, p, z1, z2); });
    safe(r.tt, [&] { return transfer_commutativity_residual(x, p, z1, z2); });
    std::optional<ReflectionData<cplx>> data;
    safe(r.t_sym, [&] {
      data = reflection_monodromy(x, p, false);
      return monodromy_symmetry_residual(*data, zs);
    });
    if (data) {
      safe(r.det_t, [&] { return std::max(det_monodromy_residual(*data, z1), det_monodromy_residual(*data, z2)); });
      safe(r.parity, [&] { return transfer_parity_residual(*data, z1); });
      safe(r.sum_rule, [&] { return sum_rule_residual(*data); });
      safe(r.big_p, [&] { return big_p_residual(*data); });
    } else {
      r.det_t = r.parity = r.sum_rule = r.big_p = INFINITY;
    }
    if (p.N >= 2) safe(r.log_canonical, [&] { return verify_log_canonical(x, p).max_residual; });
    for (int k = 0; k <= p.N; ++k) safe(r.lax, [&] { return lax_residual(x, p, k, z1); });
    rows[i] = r;
  });
  for (int i = 0; i < c.points; ++i)
    if (!raised[i].empty()) rep.warn("point " + std::to_string(i) + ": " + raised[i]);
  auto worst = [&](double Row::*f) {
    double w = 0.0;
    for (auto& r : rows) w = std::max(w, std::isfinite(r.*f) ? r.*f : INFINITY);
    return w;
  };
  double t = c.tol.identity;
  rep.check("det_L", worst(&Row::det_l), t);
  rep.check("L_symmetries", worst(&Row::l_sym), t);
  rep.check("RTT", worst(&Row::rtt), t);
  rep.check("T_symmetries", worst(&Row::t_sym), t);
  rep.check("det_T", worst(&Row::det_t), t);
  rep.check("reflection_algebra", worst(&Row::refl), t);
  rep.check("explicit_brackets", worst(&Row::brackets), t);
  rep.check("transfer_commutativity", worst(&Row::tt), t);
  rep.check("transfer_parity", worst(&Row::parity), t);
  rep.check("sum_rule", worst(&Row::sum_rule), t);
  rep.check("P_N_over_2", worst(&Row::big_p), t);
  if (p.N >= 2) rep.check("log_canonical_chart", worst(&Row::log_canonical), c.tol.log_canonical);
  rep.check("lax_pair", worst(&Row::lax), c.tol.log_canonical);
  // The other ordering of the second monodromy factor, for comparison.
  rep.set_stage("ordering");
  auto q = p;
  q.ordering = p.ordering == OrderingMode::reversed ? OrderingMode::as_printed : OrderingMode::reversed;
  auto x0 = point_for(c, 0);
  auto zs = z_samples(mix(c.seed, 0, 3), 2);
  rep.data()["points"] = c.points;
  rep.data()["ordering_comparison"] = {{"configured", ordering_name(p.ordering)},
                                       {"configured_transfer_commutativity", num(transfer_commutativity_residual(x0, p, zs[0], zs[1]))},
                                       {"other", ordering_name(q.ordering)},
                                       {"other_transfer_commutativity", num(transfer_commutativity_residual(x0, q, zs[0], zs[1]))}};
}

inline void cmd_evolve(const RunConfig& c, Report& rep, const std::filesystem::path& out) {
  const auto& p = c.model;
  auto x = point_for(c, 0);
  int k = c.hamiltonian_index;
  rep.set_stage("integrate");
  auto tr = integrate_flow(x, p, k, c.times, c.tol.ode);
  rep.set_stage("conservation");
  auto q0 = spectral_polynomial(monodromy_numerator(x, p)).c;
  std::vector<double> qdrift;
  double worst_q = 0.0;
  for (auto& s : tr.states) {
    auto q = spectral_polynomial(monodromy_numerator(s, p)).c;
    double d = 0.0;
    for (std::size_t i = 0; i < std::min(q.size(), q0.size()); ++i) d = std::max(d, std::abs(q[i] - q0[i]) / (1.0 + std::abs(q0[i])));
    qdrift.push_back(d);
    worst_q = std::max(worst_q, d);
  }
  rep.check("casimir_drift", tr.diagnostics.max_casimir_drift, c.tol.conservation);
  rep.check("hamiltonian_drift", tr.diagnostics.max_hamiltonian_drift, c.tol.conservation);
  rep.check("curve_coefficient_drift", worst_q, c.tol.conservation);
  if (p.N >= 2) {
    rep.set_stage("commutation");
    double s = 0.5, t = 0.5;
    auto a = integrate_flow(integrate_flow(x, p, 1, s, c.tol.ode).states.back(), p, 2, t, c.tol.ode).states.back();
    auto b = integrate_flow(integrate_flow(x, p, 2, t, c.tol.ode).states.back(), p, 1, s, c.tol.ode).states.back();
    auto fa = flatten(a), fb = flatten(b);
    double d = 0.0;
    for (std::size_t i = 0; i < fa.size(); ++i) d = std::max(d, std::abs(fa[i] - fb[i]) / (1.0 + std::abs(fa[i])));
    rep.check("flows_commute_P1_P2", d, c.tol.conservation);
  }
  rep.data()["hamiltonian_index"] = k;
  rep.data()["samples"] = tr.times.size();
  rep.data()["rhs_evaluations"] = tr.diagnostics.rhs_evaluations;
  rep.data()["final_state"] = to_json(flatten(tr.states.back()));
  std::ostringstream traj;
  write_trajectory_csv(traj, tr);
  write_text(out / "trajectory.csv", traj.str());
  std::ostringstream cons;
  cons << "t,casimir_drift,hamiltonian_drift,curve_coefficient_drift\n";
  auto w0 = casimirs(x);
  auto h0 = reflection_monodromy(x, p, false).hamiltonians;
  for (std::size_t i = 0; i < tr.times.size(); ++i) {
    auto w = casimirs(tr.states[i]);
    auto h = reflection_monodromy(tr.states[i], p, false).hamiltonians;
    double dw = 0, dh = 0;
    for (std::size_t j = 0; j < w.size(); ++j) dw = std::max(dw, std::abs(w[j] - w0[j]) / (1.0 + std::abs(w0[j])));
    for (std::size_t j = 0; j < h.size(); ++j) dh = std::max(dh, std::abs(h[j] - h0[j]) / (1.0 + std::abs(h0[j])));
    cons << csv_num(tr.times[i]) << "," << csv_num(dw) << "," << csv_num(dh) << "," << csv_num(qdrift[i]) << "\n";
  }
  write_text(out / "conservation.csv", cons.str());
}

inline void cmd_sov(const RunConfig& c, Report& rep, const std::filesystem::path& out) {
  const auto& p = c.model;
  if (p.N < 2) throw Error(ErrorKind::domain, "separated variables need N >= 2");
  std::vector<double> lc(c.points), gr(c.points);
  rep.set_stage("chart");
  parallel_for(c.points, [&](int i) {
    auto x = point_for(c, i);
    lc[i] = verify_log_canonical(x, p).max_residual;
    auto ch = sov_chart(seed_duals(x), p);
    auto base = sov_chart(x, p);
    double w = 0.0;
    for (int k = 0; k < ch.size(); ++k) {
      auto g = gradient_of(ch.lambdas[k], num_vars(x));
      auto fd = gradient_fd(
          [&](const PhasePoint& y) {
            auto cy = sov_chart(y, p);
            int best = 0;
            for (int j = 1; j < cy.size(); ++j)
              if (std::abs(cy.lambdas[j] - base.lambdas[k]) < std::abs(cy.lambdas[best] - base.lambdas[k])) best = j;
            return cy.lambdas[best];
          },
          x);
      w = std::max(w, (g - fd).cwiseAbs().maxCoeff() / std::max(1e-300, g.cwiseAbs().maxCoeff()));
    }
    gr[i] = w;
  });
  rep.check("log_canonical_chart", *std::max_element(lc.begin(), lc.end()), c.tol.log_canonical);
  rep.check("root_gradients_vs_finite_differences", *std::max_element(gr.begin(), gr.end()), c.tol.gradient);
  auto x = point_for(c, 0);
  auto ch = sov_chart(x, p);
  rep.data()["chart"] = {{"Q", to_json(ch.bigQ)}, {"P", to_json(ch.bigP)}, {"lambda", to_json(ch.lambdas)}, {"y", to_json(ch.ys)}};
  rep.set_stage("divisor_track");
  auto tr = integrate_flow(x, p, c.hamiltonian_index, c.times, c.tol.ode);
  auto charts = divisor_track(tr, p);
  auto q2n = spectral_polynomial(monodromy_numerator(x, p));
  double on_curve = 0.0;
  std::ostringstream os;
  os << "t";
  for (int k = 1; k <= ch.size(); ++k) os << ",re_lambda" << k << ",im_lambda" << k;
  os << ",re_Q,im_Q\n";
  for (std::size_t i = 0; i < charts.size(); ++i) {
    os << csv_num(tr.times[i]);
    for (int k = 0; k < charts[i].size(); ++k) {
      cplx l = charts[i].lambdas[k], y = charts[i].ys[k];
      on_curve = std::max(on_curve, std::abs(q2n.eval(l) - y * y) / std::max(1.0, std::abs(y * y)));
      os << "," << csv_num(l.real()) << "," << csv_num(l.imag());
    }
    os << "," << csv_num(charts[i].bigQ.real()) << "," << csv_num(charts[i].bigQ.imag()) << "\n";
  }
  rep.check("divisor_on_curve", on_curve, c.tol.log_canonical);
  write_text(out / "divisor.csv", os.str());
}

inline json h2_json(const H2Check& h) {
  std::string verdict = h.linear_residual < 1e-8 ? "linear reading" : h.squared_residual < 1e-8 ? "squared reading" : "neither product reading";
  return {{"h2", to_json(h.h2)},
          {"Q2N_at_minus2", to_json(h.q_minus2)},
          {"reading_linear", to_json(h.reading_linear)},
          {"reading_squared", to_json(h.reading_squared)},
          {"closed_form_xi_plus", to_json(h.derived)},
          {"residual_linear", num(h.linear_residual)},
          {"residual_squared", num(h.squared_residual)},
          {"residual_closed_form", num(h.derived_residual)},
          {"verdict", verdict}};
}

inline void cmd_curve(const RunConfig& c, Report& rep, const std::filesystem::path&) {
  auto x = point_for(c, 0);
  rep.set_stage("curve");
  auto curve = curve_from_point(x, c.model);
  rep.data()["branch_points"] = to_json(curve.hc.branch_points());
  rep.data()["hamiltonians"] = to_json(curve.hamiltonians);
  auto h = h2_readings(curve);
  rep.check("h2_equals_Q2N_at_minus2", h.q_residual, c.tol.identity);
  rep.data()["h2_at_minus2"] = h2_json(h);
  if (c.model.N < 2) return;
  rep.set_stage("periods");
  auto pd = periods(curve, homology_basis(curve.hc), c.tol.quadrature);
  rep.check("period_matrix_symmetric", pd.symmetry_residual, 1e-8);
  rep.check_above("im_period_matrix_min_eigenvalue", pd.min_imag_eigenvalue, 1e-12);
  rep.check("normalization", pd.normalization_residual, 1e-8);
  rep.check("residues_at_infinity", pd.residue_residual, 1e-8);
  rep.check("W_A_periods_vanish", pd.w_normalization_residual, 1e-8);
  rep.check("W_residues", pd.w_residue_residual, 1e-8);
  rep.data()["riemann_matrix"] = to_json(pd.riemann);
  rep.data()["normalization_matrix"] = to_json(pd.norm);
  rep.data()["c"] = to_json(pd.c);
  rep.data()["delta"] = to_json(pd.delta);
  rep.data()["W"] = to_json(pd.W);
  rep.data()["quadrature"] = {{"evaluations", pd.stats.evaluations}, {"max_error", num(pd.stats.error)}};
}

inline void cmd_linearize(const RunConfig& c, Report& rep, const std::filesystem::path& out) {
  const auto& p = c.model;
  int N = p.N, k = c.hamiltonian_index;
  if (N < 2) throw Error(ErrorKind::domain, "linearization needs N >= 2");
  if (k < 1) throw Error(ErrorKind::domain, "hamiltonian_index must be in 1..N for linearization");
  if (c.times.size() < 2) throw Error(ErrorKind::domain, "insufficient samples for a slope fit");
  auto x = point_for(c, 0);
  auto g = build_geometry(c, x, rep);
  rep.set_stage("angles");
  auto series = angle_series(g.curve, g.pd, x, p, k, c.times, c.tol.ode, c.tol.quadrature);
  const auto& U = series.angles;
  rep.data()["refinement"] = series.refinement;
  double tol = c.tol.by_genus(c.tol.linearization, N);
  Eigen::VectorXcd slopes(N);
  double fit_res = 0.0, slope_err = 0.0;
  for (int j = 0; j < N; ++j) {
    std::vector<cplx> v;
    for (auto& u : U) v.push_back(u[j]);
    auto fit = fit_line(series.times, v);
    slopes[j] = fit.slope;
    fit_res = std::max(fit_res, fit.residual);
    slope_err = std::max(slope_err, std::abs(fit.slope - (j + 1 == k ? 1.0 : 0.0)));
  }
  std::vector<cplx> ft;
  for (auto& u : U) {
    cplx s = 4.0 * g.curve.p_sum() * u[N - 1];
    for (int m = 0; m + 1 < N; ++m) s -= g.pd.nu[m] * u[m];
    ft.push_back(s);
  }
  auto fN = fit_line(series.times, ft);
  rep.check("slopes_equal_delta_jk", slope_err, tol);
  rep.check("fit_residual", fit_res, tol);
  rep.check("normalized_last_angle_slope_c_k", std::abs(fN.slope - g.pd.c[k - 1]) / (1.0 + std::abs(g.pd.c[k - 1])), tol);
  rep.data()["hamiltonian_index"] = k;
  rep.data()["slopes"] = to_json(slopes);
  rep.data()["c_k"] = to_json(g.pd.c[k - 1]);
  rep.data()["fitted_last_angle_slope"] = to_json(fN.slope);
  std::ostringstream os;
  os << "t";
  for (int j = 1; j <= N; ++j) os << ",re_F" << j << ",im_F" << j;
  os << "\n";
  for (std::size_t i = 0; i < U.size(); ++i) {
    os << csv_num(series.times[i]);
    for (int j = 0; j < N; ++j) os << "," << csv_num(U[i][j].real()) << "," << csv_num(U[i][j].imag());
    os << "\n";
  }
  write_text(out / "angles.csv", os.str());
}

inline ThetaContext build_theta(const RunConfig& c, const Geometry& g, const PhasePoint& x, Report& rep) {
  rep.set_stage("theta_context");
  auto ctx = make_theta_context(g.curve, g.pd, sov_chart(x, c.model));
  if (c.negative_control == "corrupt_normalization") {
    corrupt_normalization(ctx.pd);
    rep.warn("negative control: normalization matrix deliberately corrupted");
  }
  return ctx;
}

inline void theta_checks(const ThetaContext& ctx, Report& rep, std::uint64_t seed) {
  rep.set_stage("theta_checks");
  const auto& th = ctx.theta;
  const auto& B = th.period_matrix();
  int g = th.genus();
  Rng rng(seed);
  double aut = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXcd z(g);
    for (int i = 0; i < g; ++i) z[i] = rng.disk(1.0);
    cplx t0 = th(z);
    for (int i = 0; i < g; ++i) {
      Eigen::VectorXcd e = Eigen::VectorXcd::Zero(g);
      e[i] = 1.0;
      aut = std::max(aut, std::abs(th(z + e) - t0) / std::abs(t0));
      cplx f = std::exp(cplx(0, -std::numbers::pi) * B(i, i) - cplx(0, 2.0 * std::numbers::pi) * z[i]);
      aut = std::max(aut, std::abs(th(z + B.col(i)) - f * t0) / std::abs(f * t0));
    }
  }
  rep.check("theta_automorphy", aut, 1e-10);
  rep.check("odd_point_value", ctx.odd.value_residual, 1e-8);
  rep.check_above("odd_point_gradient", ctx.odd.grad_norm, 1e-4);
  rep.check("riemann_constant_divisor", ctx.k.divisor_residual, 1e-7);
  rep.check("riemann_constant_validation", ctx.k.validation_residual, 1e-7);
  rep.check_above("riemann_constant_probes", ctx.k.probe_minimum, 1e-2);
}

inline void cmd_theta_compare(const RunConfig& c, Report& rep, const std::filesystem::path& out) {
  const auto& p = c.model;
  int N = p.N, k = c.hamiltonian_index;
  if (N < 2) throw Error(ErrorKind::domain, "theta formulas need N >= 2");
  if (k < 1) throw Error(ErrorKind::domain, "hamiltonian_index must be in 1..N");
  auto x = point_for(c, 0);
  auto g = build_geometry(c, x, rep);
  auto ctx = build_theta(c, g, x, rep);
  theta_checks(ctx, rep, mix(c.seed, 0, 5));
  rep.set_stage("rho");
  auto ch = sov_chart(x, p);
  double rho_res = 0.0;
  for (auto& q : xxzr::detail::ring_points(g.curve, 6, 0.5, 0.3)) {
    cplx r1 = rho_rational(g.curve, ch, q);
    cplx r2 = rho_theta(ctx, ctx.a_divisor, abel_point(g.curve, g.pd, q));
    rho_res = std::max(rho_res, std::abs(r1 - r2) / std::max(1.0, std::abs(r1)));
  }
  rep.check("rho_rational_vs_theta", rho_res, c.tol.rho);
  rep.check("rho_at_infinity_plus_is_1", std::abs(rho_at_infinity(g.curve, ch, 1) - 1.0), c.tol.rho);
  rep.check("rho_at_infinity_minus_is_0", std::abs(rho_at_infinity(g.curve, ch, -1)), c.tol.rho);
  rep.data()["h2_at_minus2"] = h2_json(h2_readings(g.curve));
  rep.set_stage("integrate");
  auto tr = integrate_flow(x, p, k, c.times, c.tol.ode);
  rep.set_stage("q_evolution");
  double worst = 0.0;
  std::ostringstream os;
  os << "t,re_Q_ode,im_Q_ode,re_Q_theta,im_Q_theta,relative_error\n";
  for (std::size_t i = 0; i < tr.times.size(); ++i) {
    cplx qo = big_q_closed_form(tr.states[i], p);
    cplx qt = q_evolution(ctx, k, tr.times[i]);
    double r = rel(qt, qo);
    worst = std::max(worst, std::isfinite(r) ? r : INFINITY);
    os << csv_num(tr.times[i]) << "," << csv_num(qo.real()) << "," << csv_num(qo.imag()) << "," << csv_num(qt.real()) << ","
       << csv_num(qt.imag()) << "," << csv_num(r) << "\n";
  }
  rep.check("Q_theta_vs_ode", worst, c.tol.by_genus(c.tol.theta, N));
  write_text(out / "q_evolution.csv", os.str());
  rep.data()["hamiltonian_index"] = k;
  rep.data()["riemann_matrix"] = to_json(ctx.pd.riemann);
  rep.data()["U"] = to_json(ctx.pd.U(k));
  rep.data()["c"] = to_json(ctx.pd.c);
  rep.data()["W"] = to_json(ctx.pd.W);
  rep.data()["odd_point"] = to_json(ctx.odd.e);
  rep.data()["K"] = to_json(ctx.K());
}

inline void cmd_reconstruct(const RunConfig& c, Report& rep, const std::filesystem::path& out) {
  const auto& p = c.model;
  int N = p.N, k = c.hamiltonian_index;
  if (N < 2) throw Error(ErrorKind::domain, "reconstruction needs N >= 2");
  if (k < 1) throw Error(ErrorKind::domain, "hamiltonian_index must be in 1..N");
  auto x = point_for(c, 0);
  auto g = build_geometry(c, x, rep);
  auto ctx = build_theta(c, g, x, rep);
  rep.set_stage("integrate");
  auto tr = integrate_flow(x, p, k, c.times, c.tol.ode);
  rep.set_stage("reconstruct");
  auto zs = z_samples(mix(c.seed, 0, 4), c.z_samples);
  double worst = 0.0, trace = 0.0;
  std::ostringstream os;
  os << "t,max_entry_error\n";
  for (std::size_t i = 0; i < tr.times.size(); ++i) {
    auto data = reflection_monodromy(tr.states[i], p);
    double wi = 0.0;
    for (auto z : zs) {
      Mat2c T = reconstruct_monodromy(ctx, k, tr.times[i], z);
      Mat2c E;
      E << data.A(z), data.B(z), data.C(z), data.D(z);
      double r = (T - E).cwiseAbs().maxCoeff() / std::max(1.0, E.cwiseAbs().maxCoeff());
      wi = std::max(wi, std::isfinite(r) ? r : INFINITY);
      cplx t0 = g.curve.data->transfer(z);
      trace = std::max(trace, std::abs(T.trace() / 2.0 - t0) / (1.0 + std::abs(t0)));
    }
    worst = std::max(worst, wi);
    os << csv_num(tr.times[i]) << "," << csv_num(wi) << "\n";
  }
  rep.check("reconstruction_vs_ode", worst, c.tol.reconstruction);
  rep.check("trace_equals_transfer", trace, c.tol.reconstruction);
  rep.data()["hamiltonian_index"] = k;
  rep.data()["z_samples"] = to_json(zs);
  write_text(out / "reconstruction.csv", os.str());
}

// ---- Driver ----

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> n{"verify", "evolve", "sov", "curve", "linearize", "theta-compare", "reconstruct"};
  return n;
}

struct RunResult {
  int exit_code = 0;
  json report;
  double seconds = 0.0;
};

// Exit codes: 0 all checks pass, 1 a check failed, 3 a pipeline stage raised an error.
inline RunResult run_command(const std::string& cmd, const RunConfig& c, const std::filesystem::path& out) {
  using Fn = void (*)(const RunConfig&, Report&, const std::filesystem::path&);
  Fn fn = nullptr;
  if (cmd == "verify") fn = cmd_verify;
  else if (cmd == "evolve") fn = cmd_evolve;
  else if (cmd == "sov") fn = cmd_sov;
  else if (cmd == "curve") fn = cmd_curve;
  else if (cmd == "linearize") fn = cmd_linearize;
  else if (cmd == "theta-compare") fn = cmd_theta_compare;
  else if (cmd == "reconstruct") fn = cmd_reconstruct;
  else throw ConfigError("unknown command '" + cmd + "'");
  std::filesystem::create_directories(out);
  Report rep(cmd, c);
  auto t0 = std::chrono::steady_clock::now();
  try {
    fn(c, rep, out);
  } catch (const Error& e) {
    rep.fail(kind_name(e.kind()), e.what());
  } catch (const std::exception& e) {
    rep.fail("internal", e.what());
  }
  RunResult r;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.report = rep.finish();
  std::string status = r.report["status"].get<std::string>();
  r.exit_code = status == "pass" ? 0 : status == "fail" ? 1 : 3;
  write_text(out / (cmd + ".json"), r.report.dump(2) + "\n");
  json timing = {{"command", cmd}, {"seconds", r.seconds}, {"threads", thread_count()}};
  write_text(out / (cmd + ".timing.json"), timing.dump(2) + "\n");
  return r;
}

}  // namespace xxzr::cli
