#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace fsde {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Deterministic Gaussian substream. Stream i of a run is derived from
/// (seed, i) only, so per-path results do not depend on how paths are
/// scheduled across threads. The Box-Muller transform is spelled out here
/// rather than delegated to std::normal_distribution so that the byte-level
/// output is pinned by this code, not by the standard library in use.
class GaussianStream {
 public:
  GaussianStream(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t s = seed ^ (0x517cc1b727220a95ULL * (stream + 1));
    std::uint64_t init[4];
    for (auto& v : init) v = detail::splitmix64(s);
    std::seed_seq seq{init[0], init[1], init[2], init[3]};
    eng_.seed(seq);
  }

  /// Uniform in [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = 1.0 - uniform();  // (0,1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  std::uint64_t next_u64() { return eng_(); }

 private:
  std::mt19937_64 eng_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace fsde
