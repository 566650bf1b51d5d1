#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace txt {

// Counter-based pseudo-random generator, identical on every platform.
//
// Algorithm: the key is derived from (seed, stream name) as
//   key = finalize(seed XOR fnv1a64(stream))
// and the i-th output is
//   out(i) = finalize(key + i * 0x9e3779b97f4a7c15)
// where finalize() is the splitmix64 finalizer
//   x += 0x9e3779b97f4a7c15
//   x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9
//   x = (x ^ (x >> 27)) * 0x94d049bb133111eb
//   x = x ^ (x >> 31)
//
// Doubles take the top 53 bits, so every derived value is a pure function
// of (seed, stream, counter) using integer and IEEE-754 arithmetic only.
// Normal deviates use the Irwin-Hall sum of 12 uniforms, which avoids
// libm transcendentals entirely.
class CounterRng {
 public:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;

  static std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    return h;
  }

  static std::uint64_t finalize(std::uint64_t x) {
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  CounterRng(std::uint64_t seed, std::string_view stream)
      : key_(finalize(seed ^ fnv1a64(stream))) {}

  std::uint64_t next_u64() { return finalize(key_ + (++counter_) * kGolden); }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Approximately N(0, 1) via Irwin-Hall: sum of 12 uniforms minus 6.
  double next_normal() {
    double s = 0.0;
    for (int i = 0; i < 12; ++i) s += next_double();
    return s - 6.0;
  }

  // Uniform integer in [0, n). Modulo bias is negligible for n << 2^64.
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  // Deterministic Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace txt
