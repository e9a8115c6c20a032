#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vitc/rng.hpp"
#include "vitc/tensor.hpp"

namespace vitc {

// a: (m x k) or (B x m x k); b: (k x n). Rank-3 inputs are treated as a
// stack of rows sharing b.
Tensor matmul(const Tensor& a, const Tensor& b);

// Batched product of rank-3 tensors: (B x m x k)(B x k x n), or with
// transpose_b, (B x m x k)(B x n x k)^T.
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

// Elementwise, where b either matches a or matches a trailing suffix of
// a's shape (bias vectors, positional tables, masks).
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float factor);

// Exact erf form.
Tensor gelu(const Tensor& x);

// Along the last axis, stabilized by max subtraction.
Tensor softmax_rows(const Tensor& x);

inline constexpr float kLayerNormEps = 1e-5f;

// Normalizes every row over the full last dimension. With a non-empty
// `keep`, only those columns are emitted (in order) and gain/bias have
// keep.size() entries; row statistics still use every column.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps = kLayerNormEps,
                  std::span<const int> keep = {});

// Inverted dropout. Identity (same handle, no draws) when !training or p == 0.
Tensor dropout(const Tensor& x, float p, bool training, Rng& rng);

// Mean over the batch of -log softmax(logits)[label].
Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> labels);

Tensor sum(const Tensor& x);
// L1 norm; subgradient 0 at 0.
Tensor abs_sum(const Tensor& x);

Tensor slice_last(const Tensor& x, std::size_t start, std::size_t length);
Tensor concat_last(const std::vector<Tensor>& parts);

// x: (B x T x D) -> (B x D), row t of every sequence.
Tensor select_token(const Tensor& x, std::size_t t);
// x: (B x N x D), token: (D) or (1 x D) -> (B x (N+1) x D).
Tensor prepend_token(const Tensor& x, const Tensor& token);

}  // namespace vitc
