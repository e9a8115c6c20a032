#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vitc/ops.hpp"
#include "vitc/rng.hpp"
#include "vitc/tensor.hpp"

namespace vitc::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, float sd = 1.0f, bool requires_grad = true) {
  std::vector<float> v(shape_numel(shape));
  for (float& x : v) x = rng.normal(0.0f, sd);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

inline std::vector<float> to_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

inline double max_abs_diff(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
};

// Central finite differences on L = sum(f() * W) for a fixed random W.
// The numerical side evaluates L in double from the float outputs. Error per
// input tensor is ||g_analytic - g_numeric|| / max(||g_analytic||,
// ||g_numeric||, floor * ||g_all||), where g_all stacks every input's
// numeric gradient. The floor keeps tensors whose true gradient is tiny or
// zero (a key bias under softmax) from dividing float32 forward noise by
// itself; it is relative so it scales with the problem.
inline GradCheckResult grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                                  std::uint64_t seed = 7, double h = 1e-3, double floor = 1e-2) {
  Tensor probe;
  {
    NoGradGuard no_grad;
    probe = f();
  }
  Rng rng(seed);
  std::vector<float> w(probe.numel());
  for (float& x : w) x = rng.normal();
  const Tensor weights(probe.shape(), w);

  for (Tensor& t : inputs) {
    t.set_requires_grad(true);
    t.clear_grad();
  }
  backward(sum(mul(f(), weights)));

  auto loss = [&]() {
    NoGradGuard no_grad;
    const Tensor out = f();
    double acc = 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) acc += static_cast<double>(out.at(i)) * w[i];
    return acc;
  };

  struct Norms {
    double diff = 0.0, analytic = 0.0, numeric = 0.0;
  };
  std::vector<Norms> norms(inputs.size());
  double total = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor& t = inputs[k];
    std::span<float> v = t.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const float orig = v[i];
      v[i] = static_cast<float>(orig + h);
      const double up = loss();
      v[i] = static_cast<float>(orig - h);
      const double down = loss();
      v[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = t.has_grad() ? static_cast<double>(t.grad()[i]) : 0.0;
      norms[k].diff += (a - numeric) * (a - numeric);
      norms[k].analytic += a * a;
      norms[k].numeric += numeric * numeric;
    }
    total += norms[k].numeric;
  }

  GradCheckResult result;
  const double abs_floor = floor * std::sqrt(total) + 1e-12;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Norms& n = norms[k];
    const double err = std::sqrt(n.diff) / std::max({std::sqrt(n.analytic), std::sqrt(n.numeric), abs_floor});
    if (err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_input = k;
    }
  }
  return result;
}

}  // namespace vitc::testing
