#pragma once

#include <cmath>
#include <cstdint>

namespace crackscope {

// Seed for every randomized operation. Identical seeds reproduce identical
// outputs bit-exactly, so all draws go through Rng below instead of <random>
// (whose distributions are not pinned down by the standard).
struct Seed {
  std::uint64_t value = 0;
};

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(Seed s) : root_(s.value), state_(s.value) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1) with 53 random bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double next_range(double lo, double hi) { return lo + next_unit() * (hi - lo); }

  // Uniform integer in [0, n). Modulo bias is negligible for the small n
  // used here and keeps the draw count per decision fixed.
  std::uint64_t next_below(std::uint64_t n) { return n ? next_u64() % n : 0; }

  bool next_bool() { return (next_u64() & 1ull) != 0; }

  // Standard normal via Box-Muller; second value cached.
  double next_gauss() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = next_unit();
    double u2 = next_unit();
    if (u1 < 1e-300) u1 = 1e-300;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  // Independent substream k of the generator rooted at this seed. Used to
  // make per-record / per-frame work order-independent.
  Rng fork(std::uint64_t k) const {
    std::uint64_t s = root_ + (k + 1) * 0x9E3779B97F4A7C15ull;
    return Rng(Seed{splitmix64(s)});
  }

  Seed seed() const { return Seed{root_}; }

 private:
  std::uint64_t root_;
  std::uint64_t state_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace crackscope
