#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace prescript {

namespace detail {

// splitmix64 step; used both for seed mixing and stream derivation.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Derives a child seed from a master seed and a path of integers.
///
/// The fan-out is counter based: each stage of the pipeline owns a fixed path,
/// so adding stages or methods never perturbs the streams of existing ones.
inline std::uint64_t seed_chain(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t state = master ^ 0xd1b54a32d192ed03ULL;
  for (std::uint64_t p : path) {
    state ^= detail::splitmix64(state) + p;
    (void)detail::splitmix64(state);
  }
  return detail::splitmix64(state);
}

/// Deterministic random generator.
///
/// Wraps std::mt19937_64 (whose output sequence is fully specified by the
/// standard) and hand-rolls the real-valued transforms, since the standard
/// library distributions are implementation defined and would break
/// bit-reproducibility across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n). Rejection sampling keeps the draw unbiased.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % n;
    std::uint64_t draw;
    do {
      draw = engine_();
    } while (draw >= limit);
    return draw % n;
  }

  /// Standard normal via Box-Muller (cosine branch only, two uniforms per draw).
  double normal() {
    const double u1 = 1.0 - uniform01();  // (0, 1], keeps the log finite
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace prescript
