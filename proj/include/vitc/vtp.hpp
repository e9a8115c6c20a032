#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "vitc/model.hpp"
#include "vitc/tensor.hpp"

namespace vitc {

enum class MaskPlacement { None, Attention, Ffn, Full };

std::string_view to_string(MaskPlacement placement);
MaskPlacement parse_mask_placement(std::string_view text);

enum class MaskSite { AttentionIn, AttentionOut, Ffn };

std::string_view to_string(MaskSite site);

struct PruneConfig {
  float lambda = 1e-4f;
  double prune_rate = 0.0;
  MaskPlacement placement = MaskPlacement::Full;

  void validate() const;
};

struct MaskRef {
  std::size_t block;
  MaskSite site;
  Tensor values;

  bool is_attention() const { return site != MaskSite::Ffn; }
};

// Every mask layer of a model in (block, site) order; sites within a block
// are ordered AttentionIn, AttentionOut, Ffn.
struct MaskSet {
  std::vector<MaskRef> masks;

  std::size_t total_entries() const;
  bool empty() const { return masks.empty(); }
};

MaskSet collect_masks(const VitModel& model);

// Inserts all-ones trainable masks at the requested placement. Attention
// placements are rejected on models with low-rank attention.
MaskSet attach_masks(VitModel& model, MaskPlacement placement);

// lambda * sum_l |m_l|_1 over every mask in the set.
Tensor sparsity_loss(const MaskSet& masks, float lambda);

// Cross entropy plus the sparsity term (the latter omitted for an empty set).
Tensor total_loss(const Tensor& logits, std::span<const int> labels, const MaskSet& masks, float lambda);

// Cut realizing a prune rate: entries below `tau` are zeroed and ties at
// `tau` are zeroed in ascending (block, site, index) order until exactly
// `zero_count` entries are zero.
struct Threshold {
  float tau = -std::numeric_limits<float>::infinity();
  std::size_t zero_count = 0;
};

Threshold select_threshold(const MaskSet& masks, double prune_rate);

// A raw cut: every entry <= tau is zeroed.
Threshold threshold_at(const MaskSet& masks, float tau);

struct BinaryMask {
  std::size_t block;
  MaskSite site;
  std::vector<std::uint8_t> keep;

  std::vector<int> kept_indices() const;
  std::size_t kept_count() const;
};

// Throws AllDimsPruned when any single mask loses every entry.
std::vector<BinaryMask> binarize(const MaskSet& masks, const Threshold& threshold);

// Writes 0/1 into the model's mask tensors (the masked-forward reference).
void apply_binary_masks(VitModel& model, std::span<const BinaryMask> binary);

// Rebuilds every masked weight matrix with the pruned rows/columns (and the
// matching bias and LayerNorm entries) removed. The result carries no mask
// layers; the source model is not modified.
VitModel compact(const VitModel& model, std::span<const BinaryMask> binary);

// select_threshold -> binarize -> compact.
VitModel prune(const VitModel& model, double prune_rate);

}  // namespace vitc
