#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vitc/rng.hpp"
#include "vitc/tensor.hpp"

namespace vitc {

enum class LraVariant { None, DxK, KxK };

std::string_view to_string(LraVariant variant);
LraVariant parse_lra_variant(std::string_view text);

// Shared rank-k down-projection in front of Q/K/V. DxK keeps attention in
// d dimensions; KxK runs attention and feeds W_O in k dimensions.
struct LraConfig {
  LraVariant variant = LraVariant::None;
  std::size_t rank = 0;

  bool enabled() const { return variant != LraVariant::None; }
  bool operator==(const LraConfig&) const = default;
};

struct ModelConfig {
  std::size_t image_h = 32;
  std::size_t image_w = 32;
  std::size_t channels = 3;
  std::size_t patch_size = 4;
  std::size_t embed_dim = 512;
  std::size_t mlp_dim = 1024;
  std::size_t num_layers = 6;
  std::size_t num_heads = 8;
  std::size_t num_classes = 10;
  // Width of the optional hidden layer in the classification head.
  std::optional<std::size_t> head_hidden;
  float dropout = 0.1f;
  LraConfig lra;

  std::size_t num_patches() const { return (image_h / patch_size) * (image_w / patch_size); }
  std::size_t seq_len() const { return num_patches() + 1; }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
  // Width Q/K/V project into and W_O reads from.
  std::size_t attention_width() const { return lra.variant == LraVariant::KxK ? lra.rank : embed_dim; }
  // Width Q/K/V read from.
  std::size_t attention_input_width() const { return lra.enabled() ? lra.rank : embed_dim; }
  std::size_t head_width() const { return attention_width() / num_heads; }

  // Throws InvalidConfig / NotDivisible / InvalidRank.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// CIFAR-10 architectures from the hyper-parameter sweep: classification
// head with a 1024-wide hidden layer, 8 heads, dropout 0.1.
ModelConfig reference_config(std::size_t patch_size, std::size_t embed_dim, std::size_t mlp_dim, std::size_t num_layers);

struct HeadSlice {
  std::size_t qk_offset;
  std::size_t v_offset;
  std::size_t v_width;
};

struct AttentionBlock {
  Tensor norm_gain, norm_bias;
  // Original indices of the normalized input columns that survive pruning;
  // empty means all of them.
  std::vector<int> in_keep;
  Tensor proj_weight, proj_bias;  // LRA only
  Tensor query_weight, query_bias;
  Tensor key_weight, key_bias;
  Tensor value_weight, value_bias;
  Tensor out_weight, out_bias;
  // Original indices of the concatenated head-output coordinates that
  // survive pruning; empty means all of them.
  std::vector<int> out_keep;
  std::vector<HeadSlice> heads;
  std::size_t head_width = 0;
  float scale = 1.0f;
  Tensor mask_in, mask_out;
};

struct FeedForwardBlock {
  Tensor norm_gain, norm_bias;
  Tensor fc1_weight, fc1_bias;
  Tensor fc2_weight, fc2_bias;
  std::vector<int> keep;  // original hidden indices; empty = all
  Tensor mask;
};

struct TransformerBlock {
  AttentionBlock attn;
  FeedForwardBlock ffn;
};

struct VitModel {
  ModelConfig config;

  Tensor patch_weight, patch_bias;
  Tensor cls_token;
  Tensor pos_embed;
  std::vector<TransformerBlock> blocks;
  Tensor norm_gain, norm_bias;
  Tensor head_hidden_weight, head_hidden_bias;
  Tensor head_weight, head_bias;

  // Freshly initialized model (Xavier-uniform linear weights, zero biases,
  // unit LayerNorm gains, N(0, 0.02) class token and positions).
  static VitModel create(const ModelConfig& config, std::uint64_t seed);

  // Deep copy with independent storage.
  VitModel clone() const;

  // Stable order; masks are included only when requested.
  std::vector<std::pair<std::string, Tensor>> named_parameters(bool include_masks = true) const;
  std::vector<Tensor> parameters(bool include_masks = true) const;

  bool has_masks() const;
  bool is_compacted() const;
  void set_requires_grad(bool value);
};

// Head layout for an attention block with the given surviving output
// coordinates (original indices, ascending; empty = all).
std::vector<HeadSlice> head_layout(std::size_t num_heads, std::size_t head_width, std::span<const int> out_keep);

// Row i is the i-th patch in row-major patch order; within a patch, pixels
// in row-major order, each emitting its C channel values. image is H x W x C.
Tensor patchify(std::span<const float> image, std::size_t h, std::size_t w, std::size_t c, std::size_t patch);
// (B x H x W x C) -> (B x N x P^2C).
Tensor patchify_batch(const Tensor& images, std::size_t patch);

struct ForwardContext {
  bool training = false;
  Rng* rng = nullptr;  // required when training with dropout
};

// patches: (B x N x P^2C) -> (B x (N+1) x d).
Tensor embed(const Tensor& patches, const VitModel& model, ForwardContext& ctx);

// h is the normalized block input (already narrowed by in_keep). Applies
// the shared projection when present, the input mask, multi-head scaled
// dot-product attention, the output mask, W_O and dropout.
Tensor attention_forward(const Tensor& h, const AttentionBlock& attn, float dropout_p, ForwardContext& ctx);
// LN1 followed by attention_forward.
Tensor attention_sublayer(const Tensor& x, const AttentionBlock& attn, float dropout_p, ForwardContext& ctx);

// W_2(mask * dropout(gelu(W_1 h))) followed by dropout.
Tensor ffn_forward(const Tensor& h, const FeedForwardBlock& ffn, float dropout_p, ForwardContext& ctx);

// Pre-LN residual block.
Tensor block_forward(const Tensor& x, const TransformerBlock& block, const ModelConfig& config,
                     ForwardContext& ctx);

Tensor forward_patches(const VitModel& model, const Tensor& patches, ForwardContext& ctx);
// images: (B x H x W x C) -> (B x num_classes) logits.
Tensor model_forward(const VitModel& model, const Tensor& images, ForwardContext& ctx);

// Weights only; mask layers are not counted.
std::size_t count_parameters(const VitModel& model);
// Closed form for an unpruned model built from the config (LRA included).
std::size_t count_parameters(const ModelConfig& config);

}  // namespace vitc
