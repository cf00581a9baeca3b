#pragma once

#include <cstdint>
#include <vector>

#include <xxzr/phasespace.hpp>

namespace xxzr::testing {

inline ModelParams random_params(int N, std::uint64_t seed, bool unit_a = false) {
  Rng rng(seed * 7919 + 13);
  ModelParams p;
  p.N = N;
  p.xi = rng.annulus(0.6, 1.6);
  p.a.clear();
  for (int j = 0; j < N; ++j) p.a.push_back(unit_a ? cplx(1.0) : rng.annulus(0.8, 1.25));
  return p;
}

inline std::vector<cplx> random_leaf(int N, std::uint64_t seed) {
  Rng rng(seed * 104729 + 7);
  std::vector<cplx> w;
  for (int j = 0; j < N; ++j) w.push_back(2.0 + rng.disk(1.5));
  return w;
}

inline PhasePoint random_point(int N, std::uint64_t seed) { return sample_leaf(random_leaf(N, seed), seed); }

// Milder sample for flows: complex-time trajectories from the wide annulus
// often run into poles before t = 1.
inline PhasePoint flow_point(int N, std::uint64_t seed) { return sample_leaf(random_leaf(N, seed), seed, 0.8, 1.25); }

// Generic spectral parameter away from the special points of the chain.
inline cplx random_z(Rng& rng) { return rng.annulus(0.6, 1.6) * std::exp(cplx(0, 0.05)); }

inline double rel(cplx a, cplx b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

}  // namespace xxzr::testing
