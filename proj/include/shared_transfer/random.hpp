#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace shared_transfer {

// Deterministic RNG wrapper. The standard distributions are
// implementation-defined, so the transforms live here: the byte stream a
// given seed produces is fixed by this file alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller (two uniforms per draw, no cached spare)
  double normal() {
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925286766559 * u2);
  }

  // uniform integer in [lo, hi] inclusive
  int uniform_int(int lo, int hi) {
    auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace shared_transfer
