#pragma once

#include <cmath>
#include <vector>

#include "vitc/model.hpp"

namespace vitc::testing {

// Multi-head attention for one unpruned block written as explicit loops in
// double precision. h is (B x T x width_in), already layer-normalized.
inline std::vector<double> naive_attention(const Tensor& h, const AttentionBlock& a, std::size_t num_heads) {
  const std::size_t B = h.dim(0), T = h.dim(1), in = h.dim(2);
  auto linear = [](const std::vector<double>& x, std::size_t rows, std::size_t in_w, const Tensor& w,
                   const Tensor& b) {
    const std::size_t out_w = w.dim(1);
    std::vector<double> y(rows * out_w);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t o = 0; o < out_w; ++o) {
        double acc = b.at(o);
        for (std::size_t i = 0; i < in_w; ++i) acc += x[r * in_w + i] * w.at(i * out_w + o);
        y[r * out_w + o] = acc;
      }
    return y;
  };

  std::vector<double> x(h.values().begin(), h.values().end());
  std::size_t width = in;
  if (a.proj_weight.defined()) {
    x = linear(x, B * T, width, a.proj_weight, a.proj_bias);
    width = a.proj_weight.dim(1);
  }
  const std::vector<double> q = linear(x, B * T, width, a.query_weight, a.query_bias);
  const std::vector<double> k = linear(x, B * T, width, a.key_weight, a.key_bias);
  const std::vector<double> v = linear(x, B * T, width, a.value_weight, a.value_bias);
  const std::size_t aw = a.query_weight.dim(1);
  const std::size_t hw = aw / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hw));

  std::vector<double> o(B * T * aw, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t hd = 0; hd < num_heads; ++hd)
      for (std::size_t i = 0; i < T; ++i) {
        std::vector<double> s(T);
        double mx = -INFINITY;
        for (std::size_t j = 0; j < T; ++j) {
          double dot = 0.0;
          for (std::size_t c = 0; c < hw; ++c)
            dot += q[(b * T + i) * aw + hd * hw + c] * k[(b * T + j) * aw + hd * hw + c];
          s[j] = dot * scale;
          mx = std::max(mx, s[j]);
        }
        double z = 0.0;
        for (double& e : s) z += (e = std::exp(e - mx));
        for (std::size_t j = 0; j < T; ++j)
          for (std::size_t c = 0; c < hw; ++c)
            o[(b * T + i) * aw + hd * hw + c] += s[j] / z * v[(b * T + j) * aw + hd * hw + c];
      }
  return linear(o, B * T, aw, a.out_weight, a.out_bias);
}

inline void fill(Tensor t, float value) {
  for (float& v : t.mutable_values()) v = value;
}

}  // namespace vitc::testing

namespace vitc::testing {

inline void randomize(Tensor t, Rng& rng, float sd = 0.5f) {
  for (float& v : t.mutable_values()) v = rng.normal(0.0f, sd);
}

// Every weight, bias, gain and embedding gets a random value so that no
// parameter sits at a special point (zero bias, unit gain) during checks.
inline void randomize_all(VitModel& model, std::uint64_t seed, float sd = 0.3f) {
  Rng rng(seed);
  for (auto& [name, t] : model.named_parameters(false)) randomize(t, rng, sd);
}

inline ModelConfig tiny_config(std::size_t d = 16, std::size_t layers = 2, std::size_t heads = 4) {
  ModelConfig c;
  c.image_h = 8;
  c.image_w = 8;
  c.channels = 3;
  c.patch_size = 4;
  c.embed_dim = d;
  c.mlp_dim = 2 * d;
  c.num_layers = layers;
  c.num_heads = heads;
  c.num_classes = 5;
  c.head_hidden = d;
  c.dropout = 0.0f;
  return c;
}

}  // namespace vitc::testing
