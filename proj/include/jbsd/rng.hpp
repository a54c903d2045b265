#pragma once

#include "jbsd/types.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace jbsd {

/// SplitMix64 step; used to derive child seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Seed-splitting scheme used throughout the experiment harness:
/// each (cell, trial) pair gets an independent stream seed obtained by
/// chaining the master seed and both indices through SplitMix64. Trial
/// results therefore do not depend on scheduling order or thread count.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t cell,
                                 std::uint64_t trial = 0) {
  std::uint64_t s = master;
  std::uint64_t a = splitmix64(s);
  s ^= cell * 0xd1342543de82ef95ull;
  std::uint64_t b = splitmix64(s);
  s ^= trial * 0xaf251af3b0f025b5ull;
  std::uint64_t c = splitmix64(s);
  return a ^ (b << 1) ^ c;
}

///
/// Deterministic random stream with explicit floating-point generation.
///
/// Uniform and Gaussian variates are produced from raw 64-bit engine
/// output rather than std:: distributions, whose output is
/// implementation-defined; runs reproduce bit-for-bit given a seed.
///
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; second variate cached.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Circularly-symmetric complex normal CN(0, 1).
  cxd complex_gaussian() {
    return cxd(gaussian() * M_SQRT1_2, gaussian() * M_SQRT1_2);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace jbsd
