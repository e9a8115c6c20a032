#include "vitc/adam.hpp"

#include <cmath>
#include <string>

#include "vitc/error.hpp"

namespace vitc {

Adam::Adam(std::vector<Tensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options), m_(params_.size()), v_(params_.size()) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].numel(), 0.0f);
    v_[i].assign(params_[i].numel(), 0.0f);
  }
}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) {
      throw Error(ErrorCode::MissingGrad, "parameter " + std::to_string(i) + " has no gradient");
    }
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const float correction1 = static_cast<float>(1.0 - std::pow(static_cast<double>(options_.beta1), t));
  const float correction2 = static_cast<float>(1.0 - std::pow(static_cast<double>(options_.beta2), t));
  const float b1 = options_.beta1;
  const float b2 = options_.beta2;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    std::span<float> p = params_[i].mutable_values();
    std::span<const float> g = params_[i].grad();
    std::vector<float>& m = m_[i];
    std::vector<float>& v = v_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      const float m_hat = m[j] / correction1;
      const float v_hat = v[j] / correction2;
      p[j] -= options_.lr * m_hat / (std::sqrt(v_hat) + options_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace vitc
