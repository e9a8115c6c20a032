#include "vitc/vtp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vitc/error.hpp"
#include "vitc/ops.hpp"

namespace vitc {

std::string_view to_string(MaskPlacement placement) {
  switch (placement) {
    case MaskPlacement::None: return "none";
    case MaskPlacement::Attention: return "attention";
    case MaskPlacement::Ffn: return "ffn";
    case MaskPlacement::Full: return "full";
  }
  return "none";
}

MaskPlacement parse_mask_placement(std::string_view text) {
  if (text == "none") return MaskPlacement::None;
  if (text == "attention") return MaskPlacement::Attention;
  if (text == "ffn") return MaskPlacement::Ffn;
  if (text == "full") return MaskPlacement::Full;
  throw Error(ErrorCode::InvalidPlacement, "unknown mask placement '" + std::string(text) + "'");
}

std::string_view to_string(MaskSite site) {
  switch (site) {
    case MaskSite::AttentionIn: return "attn_in";
    case MaskSite::AttentionOut: return "attn_out";
    case MaskSite::Ffn: return "ffn";
  }
  return "ffn";
}

void PruneConfig::validate() const {
  if (!(lambda >= 0.0f)) throw Error(ErrorCode::InvalidConfig, "lambda must be non-negative");
  if (!(prune_rate >= 0.0 && prune_rate < 1.0)) {
    throw Error(ErrorCode::InvalidRate, "prune rate " + std::to_string(prune_rate) + " not in [0,1)");
  }
}

std::size_t MaskSet::total_entries() const {
  std::size_t n = 0;
  for (const MaskRef& m : masks) n += m.values.numel();
  return n;
}

MaskSet collect_masks(const VitModel& model) {
  MaskSet set;
  for (std::size_t l = 0; l < model.blocks.size(); ++l) {
    const TransformerBlock& b = model.blocks[l];
    if (b.attn.mask_in.defined()) set.masks.push_back({l, MaskSite::AttentionIn, b.attn.mask_in});
    if (b.attn.mask_out.defined()) set.masks.push_back({l, MaskSite::AttentionOut, b.attn.mask_out});
    if (b.ffn.mask.defined()) set.masks.push_back({l, MaskSite::Ffn, b.ffn.mask});
  }
  return set;
}

MaskSet attach_masks(VitModel& model, MaskPlacement placement) {
  if (model.has_masks()) throw Error(ErrorCode::AlreadyMasked, "model already carries mask layers");
  const bool attention = placement == MaskPlacement::Attention || placement == MaskPlacement::Full;
  const bool ffn = placement == MaskPlacement::Ffn || placement == MaskPlacement::Full;
  if (attention && model.config.lra.enabled()) {
    throw Error(ErrorCode::InvalidPlacement, "low-rank attention blocks take feedforward masks only");
  }
  for (TransformerBlock& b : model.blocks) {
    if (attention) {
      b.attn.mask_in = Tensor::full({b.attn.query_weight.dim(0)}, 1.0f, true);
      b.attn.mask_out = Tensor::full({b.attn.value_weight.dim(1)}, 1.0f, true);
    }
    if (ffn) b.ffn.mask = Tensor::full({b.ffn.fc1_weight.dim(1)}, 1.0f, true);
  }
  return collect_masks(model);
}

Tensor sparsity_loss(const MaskSet& masks, float lambda) {
  if (masks.empty()) return Tensor::scalar(0.0f);
  Tensor total = abs_sum(masks.masks[0].values);
  for (std::size_t i = 1; i < masks.masks.size(); ++i) total = add(total, abs_sum(masks.masks[i].values));
  return scale(total, lambda);
}

Tensor total_loss(const Tensor& logits, std::span<const int> labels, const MaskSet& masks, float lambda) {
  const Tensor ce = cross_entropy_loss(logits, labels);
  if (masks.empty()) return ce;
  return add(ce, sparsity_loss(masks, lambda));
}

namespace {

std::vector<float> flatten(const MaskSet& masks) {
  std::vector<float> all;
  all.reserve(masks.total_entries());
  for (const MaskRef& m : masks.masks) all.insert(all.end(), m.values.values().begin(), m.values.values().end());
  return all;
}

}  // namespace

Threshold select_threshold(const MaskSet& masks, double prune_rate) {
  if (!(prune_rate >= 0.0 && prune_rate < 1.0)) {
    throw Error(ErrorCode::InvalidRate, "prune rate " + std::to_string(prune_rate) + " not in [0,1)");
  }
  const std::vector<float> all = flatten(masks);
  // The epsilon absorbs representation error in products such as 0.3 * 10000.
  const auto count = static_cast<std::size_t>(std::floor(prune_rate * static_cast<double>(all.size()) + 1e-9));
  Threshold t;
  t.zero_count = count;
  if (count == 0) return t;
  std::vector<float> sorted = all;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(count - 1), sorted.end());
  t.tau = sorted[count - 1];
  return t;
}

Threshold threshold_at(const MaskSet& masks, float tau) {
  Threshold t;
  t.tau = tau;
  for (float v : flatten(masks))
    if (v <= tau) ++t.zero_count;
  return t;
}

std::vector<int> BinaryMask::kept_indices() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < keep.size(); ++i)
    if (keep[i]) out.push_back(static_cast<int>(i));
  return out;
}

std::size_t BinaryMask::kept_count() const { return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), 1)); }

std::vector<BinaryMask> binarize(const MaskSet& masks, const Threshold& threshold) {
  std::size_t below = 0;
  for (const MaskRef& m : masks.masks)
    for (float v : m.values.values())
      if (v < threshold.tau) ++below;
  // Ties at tau are zeroed in traversal order until the count is exact.
  std::size_t ties_to_zero = threshold.zero_count > below ? threshold.zero_count - below : 0;

  std::vector<BinaryMask> out;
  for (const MaskRef& m : masks.masks) {
    BinaryMask b{m.block, m.site, std::vector<std::uint8_t>(m.values.numel(), 1)};
    const auto values = m.values.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i] < threshold.tau) {
        b.keep[i] = 0;
      } else if (values[i] == threshold.tau && ties_to_zero > 0) {
        b.keep[i] = 0;
        --ties_to_zero;
      }
    }
    if (!values.empty() && b.kept_count() == 0) {
      throw Error(ErrorCode::AllDimsPruned, "every dimension of block " + std::to_string(m.block) + " " +
                                                std::string(to_string(m.site)) + " mask was pruned");
    }
    out.push_back(std::move(b));
  }
  return out;
}

namespace {

Tensor& mask_slot(VitModel& model, const BinaryMask& b) {
  if (b.block >= model.blocks.size()) throw Error(ErrorCode::ShapeMismatch, "binary mask for missing block");
  TransformerBlock& blk = model.blocks[b.block];
  Tensor& slot = b.site == MaskSite::AttentionIn    ? blk.attn.mask_in
                 : b.site == MaskSite::AttentionOut ? blk.attn.mask_out
                                                    : blk.ffn.mask;
  if (!slot.defined() || slot.numel() != b.keep.size()) {
    throw Error(ErrorCode::ShapeMismatch, "binary mask does not match block " + std::to_string(b.block) + " " +
                                              std::string(to_string(b.site)));
  }
  return slot;
}

Tensor select_rows(const Tensor& t, const std::vector<int>& rows) {
  const std::size_t cols = t.dim(1);
  std::vector<float> out;
  out.reserve(rows.size() * cols);
  for (int r : rows) {
    auto row = t.values().subspan(static_cast<std::size_t>(r) * cols, cols);
    out.insert(out.end(), row.begin(), row.end());
  }
  return Tensor({rows.size(), cols}, std::move(out), t.requires_grad());
}

Tensor select_cols(const Tensor& t, const std::vector<int>& cols) {
  const std::size_t rows = t.dim(0);
  const std::size_t width = t.dim(1);
  std::vector<float> out;
  out.reserve(rows * cols.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (int c : cols) out.push_back(t.values()[r * width + static_cast<std::size_t>(c)]);
  return Tensor({rows, cols.size()}, std::move(out), t.requires_grad());
}

Tensor select_entries(const Tensor& t, const std::vector<int>& idx) {
  std::vector<float> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(t.values()[static_cast<std::size_t>(i)]);
  return Tensor({idx.size()}, std::move(out), t.requires_grad());
}

// Maps local kept positions back to original indices. Returns empty when
// the result still spans the full original width.
std::vector<int> compose_keep(const std::vector<int>& previous, const std::vector<int>& local,
                              std::size_t original_width) {
  std::vector<int> out;
  out.reserve(local.size());
  for (int i : local) out.push_back(previous.empty() ? i : previous[static_cast<std::size_t>(i)]);
  if (out.size() == original_width) out.clear();
  return out;
}

}  // namespace

void apply_binary_masks(VitModel& model, std::span<const BinaryMask> binary) {
  for (const BinaryMask& b : binary) {
    std::span<float> values = mask_slot(model, b).mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = b.keep[i] ? 1.0f : 0.0f;
  }
}

VitModel compact(const VitModel& model, std::span<const BinaryMask> binary) {
  VitModel out = model.clone();
  const ModelConfig& cfg = model.config;
  std::vector<const BinaryMask*> in_masks(out.blocks.size(), nullptr);
  std::vector<const BinaryMask*> out_masks(out.blocks.size(), nullptr);
  std::vector<const BinaryMask*> ffn_masks(out.blocks.size(), nullptr);
  for (const BinaryMask& b : binary) {
    mask_slot(out, b);
    if (b.kept_count() == 0) {
      throw Error(ErrorCode::AllDimsPruned, "block " + std::to_string(b.block) + " " +
                                                std::string(to_string(b.site)) + " has no surviving dimension");
    }
    auto& slot = b.site == MaskSite::AttentionIn ? in_masks : b.site == MaskSite::AttentionOut ? out_masks : ffn_masks;
    slot[b.block] = &b;
  }

  for (std::size_t l = 0; l < out.blocks.size(); ++l) {
    AttentionBlock& a = out.blocks[l].attn;
    if (in_masks[l]) {
      if (a.proj_weight.defined()) {
        throw Error(ErrorCode::InvalidPlacement, "attention input masks are not supported with low-rank attention");
      }
      const std::vector<int> kept = in_masks[l]->kept_indices();
      a.norm_gain = select_entries(a.norm_gain, kept);
      a.norm_bias = select_entries(a.norm_bias, kept);
      a.query_weight = select_rows(a.query_weight, kept);
      a.key_weight = select_rows(a.key_weight, kept);
      a.value_weight = select_rows(a.value_weight, kept);
      a.in_keep = compose_keep(a.in_keep, kept, cfg.embed_dim);
    }
    if (out_masks[l]) {
      const std::vector<int> kept = out_masks[l]->kept_indices();
      // Query/key columns survive for every head that keeps a value column.
      std::vector<int> qk_columns;
      for (const HeadSlice& head : a.heads) {
        const auto first = std::lower_bound(kept.begin(), kept.end(), static_cast<int>(head.v_offset));
        const bool alive = first != kept.end() && *first < static_cast<int>(head.v_offset + head.v_width);
        if (!alive) continue;
        for (std::size_t j = 0; j < a.head_width; ++j) qk_columns.push_back(static_cast<int>(head.qk_offset + j));
      }
      a.query_weight = select_cols(a.query_weight, qk_columns);
      a.query_bias = select_entries(a.query_bias, qk_columns);
      a.key_weight = select_cols(a.key_weight, qk_columns);
      a.key_bias = select_entries(a.key_bias, qk_columns);
      a.value_weight = select_cols(a.value_weight, kept);
      a.value_bias = select_entries(a.value_bias, kept);
      a.out_weight = select_rows(a.out_weight, kept);
      a.out_keep = compose_keep(a.out_keep, kept, cfg.attention_width());
      a.heads = head_layout(cfg.num_heads, a.head_width, a.out_keep);
    }
    a.mask_in = Tensor();
    a.mask_out = Tensor();

    FeedForwardBlock& f = out.blocks[l].ffn;
    if (ffn_masks[l]) {
      const std::vector<int> kept = ffn_masks[l]->kept_indices();
      f.fc1_weight = select_cols(f.fc1_weight, kept);
      f.fc1_bias = select_entries(f.fc1_bias, kept);
      f.fc2_weight = select_rows(f.fc2_weight, kept);
      f.keep = compose_keep(f.keep, kept, cfg.mlp_dim);
    }
    f.mask = Tensor();
  }
  return out;
}

VitModel prune(const VitModel& model, double prune_rate) {
  const MaskSet masks = collect_masks(model);
  if (masks.empty()) throw Error(ErrorCode::EmptyMasks, "model has no mask layers to prune");
  const std::vector<BinaryMask> binary = binarize(masks, select_threshold(masks, prune_rate));
  return compact(model, binary);
}

}  // namespace vitc
