#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace stvcm {

// Counter-based stream: output i is a strong mix of (key, i), so draws do not
// depend on evaluation order and disjoint keys give independent streams.
// All project randomness fans out from one 64-bit seed through child() tags,
// which is what makes parallel runs byte-identical at any thread count.
class Rng {
 public:
  Rng() = default;
  explicit Rng(std::uint64_t key) : key_(key) {}

  static Rng from_seed(std::uint64_t seed) { return Rng(mix(seed ^ 0x9e3779b97f4a7c15ULL)); }

  Rng child(std::uint64_t tag) const { return Rng(mix(key_ ^ mix(tag ^ 0xbf58476d1ce4e5b9ULL))); }

  Rng child(std::string_view tag) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (char c : tag) {
      h ^= static_cast<std::uint8_t>(c);
      h *= 0x100000001b3ULL;
    }
    return child(h);
  }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL); }

  // Uniform on (0, 1]; never returns 0 so log() is safe.
  double uniform01() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller without caching the companion deviate: deterministic and
  // platform-independent, unlike std::normal_distribution.
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  std::uint64_t key() const { return key_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_ = 0x853c49e6748fea9bULL;
  std::uint64_t counter_ = 0;
};

}  // namespace stvcm
