// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace petsynth {

// All randomness in the project flows through explicitly seeded streams.
// std::mt19937_64 output is pinned by the standard, and the samplers below
// avoid std::*_distribution (whose algorithms are implementation-defined),
// so a (seed, stream) pair yields identical bytes on every platform.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Domain-separated stream tags; keeps independent uses of one master seed
// from ever sharing a generator state.
enum class Stream : std::uint64_t {
  SynthMri = 1,
  SynthPet = 2,
  InitGenerator = 3,
  InitBert = 4,
  InitCnnD = 5,
  MaskPlan = 6,
  RealGenCoin = 7,
  SampleOrder = 8,
  Test = 100,
};

inline std::uint64_t mix_seed(std::uint64_t seed, Stream stream,
                              std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t s = splitmix64(seed ^ 0x6a09e667f3bcc908ULL);
  s = splitmix64(s ^ static_cast<std::uint64_t>(stream));
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ b);
  return s;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  Rng(std::uint64_t seed, Stream stream, std::uint64_t a = 0,
      std::uint64_t b = 0)
      : gen_(mix_seed(seed, stream, a, b)) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection sampling; unbiased and portable.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  // Box-Muller; consumes two uniforms per pair of draws.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Zero-mode, heavy-tailed; inverse CDF of the Laplace distribution.
  double laplace(double scale) {
    const double u = uniform() - 0.5;
    const double s = (u < 0.0) ? -1.0 : 1.0;
    return -scale * s * std::log1p(-2.0 * std::fabs(u));
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace petsynth
