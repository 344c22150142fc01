#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace regopt {

// Counter-based random stream. Every draw is a pure function of (key, counter),
// so substreams derived per sample index generate bitwise-identical data whether
// samples are produced serially or in parallel.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix(mix(seed) ^ mix(stream ^ 0x517cc1b727220a95ull))) {}

  /// Independent stream for a per-index substream (counter restarts at 0).
  CounterRng substream(std::uint64_t index) const {
    CounterRng r(0);
    r.key_ = mix(key_ ^ mix(index + 0x9e3779b97f4a7c15ull));
    r.counter_ = 0;
    return r;
  }

  std::uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ull * ++counter_); }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n); n > 0.
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Standard normal via Box-Muller; consumes exactly two uniforms per draw.
  double normal() {
    const double u1 = (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace regopt
