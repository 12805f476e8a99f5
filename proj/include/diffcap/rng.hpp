#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace diffcap {

using Rng = std::mt19937_64;

/// Independent stream keyed by (seed, a, b); used for per-condition and
/// per-sample substreams and for separating data order from diffusion noise.
inline Rng make_rng(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a),    static_cast<std::uint32_t>(a >> 32),
                    static_cast<std::uint32_t>(b),    static_cast<std::uint32_t>(b >> 32)};
  return Rng(seq);
}

template <typename Real>
void fill_normal(std::span<Real> out, Rng& rng, double stddev = 1.0) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : out) v = static_cast<Real>(dist(rng));
}

}  // namespace diffcap
