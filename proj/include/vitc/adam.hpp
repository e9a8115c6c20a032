#pragma once

#include <cstdint>
#include <vector>

#include "vitc/tensor.hpp"

namespace vitc {

struct AdamOptions {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Bias-corrected Adam over a fixed, ordered parameter list. Moments are
// allocated lazily on the first step, zero-initialized.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamOptions options = {});

  // Throws MissingGrad if any parameter has no gradient. Gradients are left
  // untouched; call zero_grad() before the next backward.
  void step();
  void zero_grad();

  std::uint64_t step_count() const { return step_; }
  const AdamOptions& options() const { return options_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<float>& first_moment(std::size_t i) const { return m_.at(i); }
  const std::vector<float>& second_moment(std::size_t i) const { return v_.at(i); }

 private:
  std::vector<Tensor> params_;
  AdamOptions options_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  std::uint64_t step_ = 0;
};

}  // namespace vitc
