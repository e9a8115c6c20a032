#pragma once

#include <cstddef>
#include <cstdint>

#include "vitc/model.hpp"
#include "vitc/vtp.hpp"

namespace vitc {

// Config with low-rank attention substituted in every block. Throws
// InvalidRank for k == 0 or (KxK) k not divisible by the head count.
ModelConfig build_lra_attention(const ModelConfig& config, const LraConfig& lra);

// Attention parameters of one block, biases included, LayerNorm excluded.
std::size_t attention_param_count(const ModelConfig& config);

// Whole-model count with low-rank attention in all blocks.
std::size_t lra_param_count(const ModelConfig& config, const LraConfig& lra);

// LN -> shared projection -> Q/K/V -> multi-head attention -> W_O -> dropout.
// The caller adds the residual.
Tensor lra_forward(const Tensor& x, const AttentionBlock& attn, float dropout_p, ForwardContext& ctx);

// Low-rank attention in every block plus one trainable feedforward mask per
// block. Throws InvalidPlacement unless prune.placement is Ffn.
VitModel build_hybrid(const ModelConfig& config, const LraConfig& lra, const PruneConfig& prune, std::uint64_t seed);

}  // namespace vitc
