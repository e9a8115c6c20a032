#pragma once

#include <cstdint>
#include <random>

namespace vitc {

// Seeded random stream. Only the raw mt19937_64 output is consumed so that
// sequences are identical across standard library implementations (the
// std:: distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 24 bits of resolution.
  float uniform() { return static_cast<float>(engine_() >> 40) * 0x1.0p-24f; }

  double uniform_double() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    __extension__ using Wide = unsigned __int128;
    const Wide product = static_cast<Wide>(engine_()) * n;
    return static_cast<std::uint64_t>(product >> 64);
  }

  // Box-Muller; one draw per call.
  float normal(float mean = 0.0f, float stddev = 1.0f);

 private:
  std::mt19937_64 engine_;
};

}  // namespace vitc
