#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace arterial {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Deterministic generator for one named stream. Two streams derived from the
/// same seed with different names are independent, so adding a source never
/// perturbs another source's draws.
///
/// Distributions are computed here rather than through <random> distribution
/// objects, whose output is implementation-defined.
class RngStream {
 public:
  RngStream() : RngStream(0, "default") {}
  RngStream(std::uint64_t seed, std::string_view name)
      : engine_(splitmix64(seed ^ splitmix64(fnv1a(name)))) {}

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    // Lemire's multiply-shift with rejection.
    while (true) {
      const std::uint64_t x = engine_();
      const unsigned __int128 m = static_cast<unsigned __int128>(x) * span;
      const auto low = static_cast<std::uint64_t>(m);
      if (low >= (-span) % span) return lo + static_cast<std::int64_t>(m >> 64);
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace arterial
