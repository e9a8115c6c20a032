#include "vitc/lra.hpp"

#include "vitc/error.hpp"

namespace vitc {

ModelConfig build_lra_attention(const ModelConfig& config, const LraConfig& lra) {
  if (!lra.enabled() || lra.rank == 0) throw Error(ErrorCode::InvalidRank, "low-rank attention needs a variant and k > 0");
  ModelConfig out = config;
  out.lra = lra;
  out.validate();
  return out;
}

std::size_t attention_param_count(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.embed_dim;
  const std::size_t in_w = config.attention_input_width();
  const std::size_t attn_w = config.attention_width();
  std::size_t total = 3 * (in_w * attn_w + attn_w) + attn_w * d + d;
  if (config.lra.enabled()) total += d * in_w + in_w;
  return total;
}

std::size_t lra_param_count(const ModelConfig& config, const LraConfig& lra) {
  return count_parameters(build_lra_attention(config, lra));
}

Tensor lra_forward(const Tensor& x, const AttentionBlock& attn, float dropout_p, ForwardContext& ctx) {
  if (!attn.proj_weight.defined()) throw Error(ErrorCode::DimensionMismatch, "block has no shared projection");
  return attention_sublayer(x, attn, dropout_p, ctx);
}

VitModel build_hybrid(const ModelConfig& config, const LraConfig& lra, const PruneConfig& prune, std::uint64_t seed) {
  if (prune.placement != MaskPlacement::Ffn) {
    throw Error(ErrorCode::InvalidPlacement, "hybrid compression prunes the feedforward blocks only");
  }
  prune.validate();
  VitModel model = VitModel::create(build_lra_attention(config, lra), seed);
  attach_masks(model, MaskPlacement::Ffn);
  return model;
}

}  // namespace vitc
