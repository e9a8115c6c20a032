#include "vitc/rng.hpp"

#include <cmath>
#include <numbers>

namespace vitc {

float Rng::normal(float mean, float stddev) {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform_double();
  const double u2 = uniform_double();
  const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  return static_cast<float>(mean + stddev * z);
}

}  // namespace vitc
