#include "vitc/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "vitc/error.hpp"

namespace vitc {

namespace {

using detail::Node;
using BackwardFn = std::function<void(Node&)>;

Tensor make_result(Shape shape, std::vector<float> values, std::vector<Tensor> inputs, BackwardFn fn) {
  Tensor out(std::move(shape), std::move(values));
  bool track = grad_enabled();
  if (track) {
    track = false;
    for (const Tensor& t : inputs) track = track || t.requires_grad();
  }
  if (track) {
    Node& node = *out.node();
    node.requires_grad = true;
    for (const Tensor& t : inputs) node.inputs.push_back(t.node());
    node.backward_fn = std::move(fn);
  }
  return out;
}

// Accumulation target for input i, or nullptr if it needs no gradient.
float* grad_target(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  return in.requires_grad ? in.ensure_grad().data() : nullptr;
}

[[noreturn]] void mismatch(const std::string& op, const Shape& a, const Shape& b) {
  throw Error(ErrorCode::DimensionMismatch, op + ": " + shape_to_string(a) + " vs " + shape_to_string(b));
}

// Number of times b repeats inside a when b's shape is a suffix of a's.
std::size_t broadcast_outer(const char* op, const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() > sa.size() || !std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) mismatch(op, sa, sb);
  return b.numel() == 0 ? 0 : a.numel() / b.numel();
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || a.rank() > 3 || b.rank() != 2 || a.shape().back() != b.dim(0)) {
    mismatch("matmul", a.shape(), b.shape());
  }
  const std::size_t k = b.dim(0);
  const std::size_t n = b.dim(1);
  const std::size_t rows = k == 0 ? 0 : a.numel() / k;
  Shape out_shape = a.shape();
  out_shape.back() = n;

  std::vector<float> out(rows * n, 0.0f);
  const float* A = a.values().data();
  const float* B = b.values().data();
  for (std::size_t i = 0; i < rows; ++i) {
    float* o = out.data() + i * n;
    const float* arow = A + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const float av = arow[p];
      const float* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += av * brow[j];
    }
  }

  return make_result(std::move(out_shape), std::move(out), {a, b}, [rows, k, n](Node& self) {
    const float* G = self.grad.data();
    const float* A = self.inputs[0]->values.data();
    const float* B = self.inputs[1]->values.data();
    if (float* dA = grad_target(self, 0)) {
      for (std::size_t i = 0; i < rows; ++i) {
        const float* g = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const float* brow = B + p * n;
          float acc = 0.0f;
          for (std::size_t j = 0; j < n; ++j) acc += g[j] * brow[j];
          dA[i * k + p] += acc;
        }
      }
    }
    if (float* dB = grad_target(self, 1)) {
      for (std::size_t i = 0; i < rows; ++i) {
        const float* g = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const float av = A[i * k + p];
          float* drow = dB + p * n;
          for (std::size_t j = 0; j < n; ++j) drow[j] += av * g[j];
        }
      }
    }
  });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) mismatch("bmm", a.shape(), b.shape());
  const std::size_t batch = a.dim(0);
  const std::size_t m = a.dim(1);
  const std::size_t k = a.dim(2);
  if ((transpose_b ? b.dim(2) : b.dim(1)) != k) mismatch("bmm", a.shape(), b.shape());
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);

  std::vector<float> out(batch * m * n, 0.0f);
  const float* A = a.values().data();
  const float* B = b.values().data();
  for (std::size_t s = 0; s < batch; ++s) {
    const float* As = A + s * m * k;
    const float* Bs = B + s * k * n;
    float* Os = out.data() + s * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      const float* arow = As + i * k;
      float* o = Os + i * n;
      if (transpose_b) {
        for (std::size_t j = 0; j < n; ++j) {
          const float* brow = Bs + j * k;
          float acc = 0.0f;
          for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
          o[j] = acc;
        }
      } else {
        for (std::size_t p = 0; p < k; ++p) {
          const float av = arow[p];
          const float* brow = Bs + p * n;
          for (std::size_t j = 0; j < n; ++j) o[j] += av * brow[j];
        }
      }
    }
  }

  return make_result({batch, m, n}, std::move(out), {a, b}, [batch, m, k, n, transpose_b](Node& self) {
    const float* G = self.grad.data();
    const float* A = self.inputs[0]->values.data();
    const float* B = self.inputs[1]->values.data();
    float* dA = grad_target(self, 0);
    float* dB = grad_target(self, 1);
    for (std::size_t s = 0; s < batch; ++s) {
      const float* Gs = G + s * m * n;
      const float* As = A + s * m * k;
      const float* Bs = B + s * k * n;
      for (std::size_t i = 0; i < m; ++i) {
        const float* g = Gs + i * n;
        if (dA) {
          float* da = dA + s * m * k + i * k;
          if (transpose_b) {
            // dA[i,:] += sum_j g[j] * B[j,:]
            for (std::size_t j = 0; j < n; ++j) {
              const float gj = g[j];
              const float* brow = Bs + j * k;
              for (std::size_t p = 0; p < k; ++p) da[p] += gj * brow[p];
            }
          } else {
            for (std::size_t p = 0; p < k; ++p) {
              const float* brow = Bs + p * n;
              float acc = 0.0f;
              for (std::size_t j = 0; j < n; ++j) acc += g[j] * brow[j];
              da[p] += acc;
            }
          }
        }
        if (dB) {
          const float* arow = As + i * k;
          float* dBs = dB + s * k * n;
          if (transpose_b) {
            // dB[j,:] += g[j] * A[i,:]
            for (std::size_t j = 0; j < n; ++j) {
              const float gj = g[j];
              float* db = dBs + j * k;
              for (std::size_t p = 0; p < k; ++p) db[p] += gj * arow[p];
            }
          } else {
            for (std::size_t p = 0; p < k; ++p) {
              const float av = arow[p];
              float* db = dBs + p * n;
              for (std::size_t j = 0; j < n; ++j) db[j] += av * g[j];
            }
          }
        }
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  const std::size_t outer = broadcast_outer("add", a, b);
  const std::size_t inner = b.numel();
  std::vector<float> out(a.values().begin(), a.values().end());
  const float* B = b.values().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += B[i];

  return make_result(a.shape(), std::move(out), {a, b}, [outer, inner](Node& self) {
    const float* G = self.grad.data();
    if (float* dA = grad_target(self, 0))
      for (std::size_t i = 0; i < outer * inner; ++i) dA[i] += G[i];
    if (float* dB = grad_target(self, 1))
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) dB[i] += G[o * inner + i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const std::size_t outer = broadcast_outer("mul", a, b);
  const std::size_t inner = b.numel();
  std::vector<float> out(a.numel());
  const float* A = a.values().data();
  const float* B = b.values().data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] = A[o * inner + i] * B[i];

  return make_result(a.shape(), std::move(out), {a, b}, [outer, inner](Node& self) {
    const float* G = self.grad.data();
    const float* A = self.inputs[0]->values.data();
    const float* B = self.inputs[1]->values.data();
    if (float* dA = grad_target(self, 0))
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) dA[o * inner + i] += G[o * inner + i] * B[i];
    if (float* dB = grad_target(self, 1))
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) dB[i] += G[o * inner + i] * A[o * inner + i];
  });
}

Tensor scale(const Tensor& a, float factor) {
  std::vector<float> out(a.values().begin(), a.values().end());
  for (float& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {a}, [factor](Node& self) {
    float* dA = grad_target(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) dA[i] += factor * self.grad[i];
  });
}

Tensor gelu(const Tensor& x) {
  std::vector<float> out(x.numel());
  const float* X = x.values().data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = X[i];
    out[i] = static_cast<float>(0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)));
  }
  return make_result(x.shape(), std::move(out), {x}, [](Node& self) {
    const float* X = self.inputs[0]->values.data();
    float* dX = grad_target(self, 0);
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double v = X[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      dX[i] += static_cast<float>(self.grad[i] * (cdf + v * pdf));
    }
  });
}

Tensor softmax_rows(const Tensor& x) {
  if (x.rank() == 0) mismatch("softmax_rows", x.shape(), {});
  const std::size_t n = x.shape().back();
  const std::size_t rows = n == 0 ? 0 : x.numel() / n;
  std::vector<float> out(x.numel());
  const float* X = x.values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = X + r * n;
    float* o = out.data() + r * n;
    const float mx = *std::max_element(xr, xr + n);
    float total = 0.0f;
    for (std::size_t j = 0; j < n; ++j) {
      o[j] = std::exp(xr[j] - mx);
      total += o[j];
    }
    const float inv = 1.0f / total;
    for (std::size_t j = 0; j < n; ++j) o[j] *= inv;
  }

  return make_result(x.shape(), std::move(out), {x}, [rows, n](Node& self) {
    const float* Y = self.values.data();
    const float* G = self.grad.data();
    float* dX = grad_target(self, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const float* y = Y + r * n;
      const float* g = G + r * n;
      float dot = 0.0f;
      for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) dX[r * n + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps, std::span<const int> keep) {
  if (x.rank() == 0) mismatch("layer_norm", x.shape(), gain.shape());
  const std::size_t width = x.shape().back();
  const std::size_t out_width = keep.empty() ? width : keep.size();
  if (gain.numel() != out_width || bias.numel() != out_width) mismatch("layer_norm", x.shape(), gain.shape());
  std::vector<int> columns(keep.begin(), keep.end());
  if (columns.empty()) {
    columns.resize(width);
    for (std::size_t j = 0; j < width; ++j) columns[j] = static_cast<int>(j);
  }
  for (int c : columns)
    if (c < 0 || static_cast<std::size_t>(c) >= width) mismatch("layer_norm keep", x.shape(), gain.shape());

  const std::size_t rows = width == 0 ? 0 : x.numel() / width;
  std::vector<float> xhat(x.numel());
  std::vector<float> inv_std(rows);
  const float* X = x.values().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const float* xr = X + r * width;
    double mean = 0.0;
    for (std::size_t j = 0; j < width; ++j) mean += xr[j];
    mean /= static_cast<double>(width);
    double var = 0.0;
    for (std::size_t j = 0; j < width; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(width);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = static_cast<float>(inv);
    for (std::size_t j = 0; j < width; ++j) xhat[r * width + j] = static_cast<float>((xr[j] - mean) * inv);
  }

  Shape out_shape = x.shape();
  out_shape.back() = out_width;
  std::vector<float> out(rows * out_width);
  const float* g = gain.values().data();
  const float* b = bias.values().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < out_width; ++c)
      out[r * out_width + c] = g[c] * xhat[r * width + columns[c]] + b[c];

  return make_result(std::move(out_shape), std::move(out), {x, gain, bias},
                     [rows, width, out_width, columns = std::move(columns), xhat = std::move(xhat),
                      inv_std = std::move(inv_std)](Node& self) {
                       const float* G = self.grad.data();
                       const float* gain = self.inputs[1]->values.data();
                       float* dX = grad_target(self, 0);
                       float* dGain = grad_target(self, 1);
                       float* dBias = grad_target(self, 2);
                       std::vector<double> dxhat(width);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const float* g = G + r * out_width;
                         const float* xh = xhat.data() + r * width;
                         std::fill(dxhat.begin(), dxhat.end(), 0.0);
                         for (std::size_t c = 0; c < out_width; ++c) {
                           dxhat[columns[c]] += static_cast<double>(g[c]) * gain[c];
                           if (dGain) dGain[c] += g[c] * xh[columns[c]];
                           if (dBias) dBias[c] += g[c];
                         }
                         if (!dX) continue;
                         double mean_d = 0.0;
                         double mean_dx = 0.0;
                         for (std::size_t j = 0; j < width; ++j) {
                           mean_d += dxhat[j];
                           mean_dx += dxhat[j] * xh[j];
                         }
                         mean_d /= static_cast<double>(width);
                         mean_dx /= static_cast<double>(width);
                         for (std::size_t j = 0; j < width; ++j) {
                           dX[r * width + j] +=
                               static_cast<float>(inv_std[r] * (dxhat[j] - mean_d - xh[j] * mean_dx));
                         }
                       }
                     });
}

Tensor dropout(const Tensor& x, float p, bool training, Rng& rng) {
  if (!(p >= 0.0f && p < 1.0f)) {
    throw Error(ErrorCode::InvalidProbability, "dropout probability " + std::to_string(p) + " not in [0,1)");
  }
  if (!training || p == 0.0f) return x;
  const float keep_scale = 1.0f / (1.0f - p);
  std::vector<float> factor(x.numel());
  for (float& f : factor) f = rng.uniform() < p ? 0.0f : keep_scale;
  std::vector<float> out(x.numel());
  const float* X = x.values().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = X[i] * factor[i];
  return make_result(x.shape(), std::move(out), {x}, [factor = std::move(factor)](Node& self) {
    float* dX = grad_target(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) dX[i] += self.grad[i] * factor[i];
  });
}

Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size() || logits.dim(0) == 0) {
    mismatch("cross_entropy_loss", logits.shape(), {labels.size()});
  }
  const std::size_t batch = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(label) + " outside [0," +
                                                  std::to_string(classes) + ")");
    }
  }
  const float* X = logits.values().data();
  std::vector<float> probs(batch * classes);
  double total = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    const float* xr = X + r * classes;
    const double mx = *std::max_element(xr, xr + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(xr[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] = static_cast<float>(std::exp(xr[c] - lse));
    total += lse - xr[labels[r]];
  }
  std::vector<int> saved(labels.begin(), labels.end());
  return make_result({}, {static_cast<float>(total / static_cast<double>(batch))}, {logits},
                     [batch, classes, probs = std::move(probs), saved = std::move(saved)](Node& self) {
                       float* dX = grad_target(self, 0);
                       const float g = self.grad[0] / static_cast<float>(batch);
                       for (std::size_t r = 0; r < batch; ++r) {
                         for (std::size_t c = 0; c < classes; ++c) {
                           const float onehot = static_cast<int>(c) == saved[r] ? 1.0f : 0.0f;
                           dX[r * classes + c] += g * (probs[r * classes + c] - onehot);
                         }
                       }
                     });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (float v : x.values()) total += v;
  return make_result({}, {static_cast<float>(total)}, {x}, [](Node& self) {
    float* dX = grad_target(self, 0);
    const std::size_t n = self.inputs[0]->values.size();
    for (std::size_t i = 0; i < n; ++i) dX[i] += self.grad[0];
  });
}

Tensor abs_sum(const Tensor& x) {
  double total = 0.0;
  for (float v : x.values()) total += std::fabs(v);
  return make_result({}, {static_cast<float>(total)}, {x}, [](Node& self) {
    float* dX = grad_target(self, 0);
    const auto& X = self.inputs[0]->values;
    for (std::size_t i = 0; i < X.size(); ++i) {
      const float sign = X[i] > 0.0f ? 1.0f : (X[i] < 0.0f ? -1.0f : 0.0f);
      dX[i] += self.grad[0] * sign;
    }
  });
}

Tensor slice_last(const Tensor& x, std::size_t start, std::size_t length) {
  if (x.rank() == 0 || start + length > x.shape().back()) {
    throw Error(ErrorCode::DimensionMismatch, "slice_last [" + std::to_string(start) + "," +
                                                  std::to_string(start + length) + ") of " +
                                                  shape_to_string(x.shape()));
  }
  const std::size_t width = x.shape().back();
  const std::size_t rows = width == 0 ? 0 : x.numel() / width;
  Shape out_shape = x.shape();
  out_shape.back() = length;
  std::vector<float> out(rows * length);
  const float* X = x.values().data();
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(X + r * width + start, length, out.data() + r * length);
  return make_result(std::move(out_shape), std::move(out), {x}, [rows, width, start, length](Node& self) {
    float* dX = grad_target(self, 0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < length; ++j) dX[r * width + start + j] += self.grad[r * length + j];
  });
}

Tensor concat_last(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw Error(ErrorCode::DimensionMismatch, "concat_last of nothing");
  Shape lead = parts[0].shape();
  lead.pop_back();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    Shape l = p.shape();
    const std::size_t w = l.back();
    l.pop_back();
    if (l != lead) mismatch("concat_last", parts[0].shape(), p.shape());
    widths.push_back(w);
    total += w;
  }
  const std::size_t rows = shape_numel(lead);
  std::vector<float> out(rows * total);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const float* P = parts[i].values().data();
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(P + r * widths[i], widths[i], out.data() + r * total + offset);
    offset += widths[i];
  }
  Shape out_shape = lead;
  out_shape.push_back(total);
  return make_result(std::move(out_shape), std::move(out), parts, [rows, total, widths](Node& self) {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      if (float* dP = grad_target(self, i)) {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < widths[i]; ++j) dP[r * widths[i] + j] += self.grad[r * total + offset + j];
      }
      offset += widths[i];
    }
  });
}

Tensor select_token(const Tensor& x, std::size_t t) {
  if (x.rank() != 3 || t >= x.dim(1)) mismatch("select_token", x.shape(), {t});
  const std::size_t batch = x.dim(0);
  const std::size_t tokens = x.dim(1);
  const std::size_t width = x.dim(2);
  std::vector<float> out(batch * width);
  const float* X = x.values().data();
  for (std::size_t b = 0; b < batch; ++b) std::copy_n(X + (b * tokens + t) * width, width, out.data() + b * width);
  return make_result({batch, width}, std::move(out), {x}, [batch, tokens, width, t](Node& self) {
    float* dX = grad_target(self, 0);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t j = 0; j < width; ++j) dX[(b * tokens + t) * width + j] += self.grad[b * width + j];
  });
}

Tensor prepend_token(const Tensor& x, const Tensor& token) {
  if (x.rank() != 3 || token.numel() != x.dim(2)) mismatch("prepend_token", x.shape(), token.shape());
  const std::size_t batch = x.dim(0);
  const std::size_t n = x.dim(1);
  const std::size_t width = x.dim(2);
  std::vector<float> out(batch * (n + 1) * width);
  const float* X = x.values().data();
  const float* T = token.values().data();
  for (std::size_t b = 0; b < batch; ++b) {
    float* o = out.data() + b * (n + 1) * width;
    std::copy_n(T, width, o);
    std::copy_n(X + b * n * width, n * width, o + width);
  }
  return make_result({batch, n + 1, width}, std::move(out), {x, token}, [batch, n, width](Node& self) {
    const float* G = self.grad.data();
    float* dX = grad_target(self, 0);
    float* dT = grad_target(self, 1);
    for (std::size_t b = 0; b < batch; ++b) {
      const float* g = G + b * (n + 1) * width;
      if (dT)
        for (std::size_t j = 0; j < width; ++j) dT[j] += g[j];
      if (dX)
        for (std::size_t j = 0; j < n * width; ++j) dX[b * n * width + j] += g[width + j];
    }
  });
}

}  // namespace vitc
