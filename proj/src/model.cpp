#include "vitc/model.hpp"

#include <cmath>

#include "vitc/error.hpp"
#include "vitc/ops.hpp"

namespace vitc {

std::string_view to_string(LraVariant variant) {
  switch (variant) {
    case LraVariant::None: return "none";
    case LraVariant::DxK: return "dxk";
    case LraVariant::KxK: return "kxk";
  }
  return "none";
}

LraVariant parse_lra_variant(std::string_view text) {
  if (text == "none") return LraVariant::None;
  if (text == "dxk") return LraVariant::DxK;
  if (text == "kxk") return LraVariant::KxK;
  throw Error(ErrorCode::InvalidConfig, "unknown LRA variant '" + std::string(text) + "'");
}

void ModelConfig::validate() const {
  auto require = [](bool ok, ErrorCode code, const std::string& what) {
    if (!ok) throw Error(code, what);
  };
  require(image_h > 0 && image_w > 0 && channels > 0, ErrorCode::InvalidConfig, "image dimensions must be positive");
  require(patch_size > 0, ErrorCode::InvalidConfig, "patch_size must be positive");
  require(image_h % patch_size == 0 && image_w % patch_size == 0, ErrorCode::NotDivisible,
          "image " + std::to_string(image_h) + "x" + std::to_string(image_w) + " not divisible by patch " +
              std::to_string(patch_size));
  require(embed_dim > 0 && mlp_dim > 0 && num_heads > 0 && num_classes > 0, ErrorCode::InvalidConfig,
          "embed_dim, mlp_dim, num_heads and num_classes must be positive");
  require(embed_dim % num_heads == 0, ErrorCode::InvalidConfig,
          "embed_dim " + std::to_string(embed_dim) + " not divisible by num_heads " + std::to_string(num_heads));
  require(!head_hidden || *head_hidden > 0, ErrorCode::InvalidConfig, "head_hidden must be positive");
  require(dropout >= 0.0f && dropout < 1.0f, ErrorCode::InvalidConfig, "dropout must lie in [0,1)");
  if (lra.enabled()) {
    require(lra.rank > 0, ErrorCode::InvalidRank, "LRA rank must be positive");
    require(lra.variant != LraVariant::KxK || lra.rank % num_heads == 0, ErrorCode::InvalidRank,
            "KxK rank " + std::to_string(lra.rank) + " not divisible by num_heads " + std::to_string(num_heads));
  }
}

ModelConfig reference_config(std::size_t patch_size, std::size_t embed_dim, std::size_t mlp_dim, std::size_t num_layers) {
  ModelConfig cfg;
  cfg.patch_size = patch_size;
  cfg.embed_dim = embed_dim;
  cfg.mlp_dim = mlp_dim;
  cfg.num_layers = num_layers;
  cfg.num_heads = 8;
  cfg.head_hidden = 1024;
  cfg.dropout = 0.1f;
  return cfg;
}

std::vector<HeadSlice> head_layout(std::size_t num_heads, std::size_t head_width, std::span<const int> out_keep) {
  std::vector<std::size_t> widths(num_heads, out_keep.empty() ? head_width : 0);
  for (int c : out_keep) widths.at(static_cast<std::size_t>(c) / head_width) += 1;
  std::vector<HeadSlice> heads;
  std::size_t v_offset = 0;
  for (std::size_t h = 0; h < num_heads; ++h) {
    if (widths[h] == 0) continue;
    heads.push_back({heads.size() * head_width, v_offset, widths[h]});
    v_offset += widths[h];
  }
  return heads;
}

namespace {

Tensor xavier(std::size_t in, std::size_t out, Rng& rng) {
  const float limit = std::sqrt(6.0f / static_cast<float>(in + out));
  std::vector<float> v(in * out);
  for (float& x : v) x = rng.uniform(-limit, limit);
  return Tensor({in, out}, std::move(v), true);
}

Tensor normal(Shape shape, float stddev, Rng& rng) {
  std::vector<float> v(shape_numel(shape));
  for (float& x : v) x = rng.normal(0.0f, stddev);
  return Tensor(std::move(shape), std::move(v), true);
}

Tensor zeros(std::size_t n) { return Tensor::zeros({n}, true); }
Tensor ones(std::size_t n) { return Tensor::full({n}, 1.0f, true); }

Tensor copy_of(const Tensor& t) { return t.defined() ? t.clone(t.requires_grad()) : Tensor(); }

}  // namespace

VitModel VitModel::create(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const std::size_t d = config.embed_dim;
  const std::size_t in_w = config.attention_input_width();
  const std::size_t attn_w = config.attention_width();

  VitModel m;
  m.config = config;
  m.patch_weight = xavier(config.patch_dim(), d, rng);
  m.patch_bias = zeros(d);
  m.cls_token = normal({d}, 0.02f, rng);
  m.pos_embed = normal({config.seq_len(), d}, 0.02f, rng);
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    TransformerBlock b;
    AttentionBlock& a = b.attn;
    a.norm_gain = ones(d);
    a.norm_bias = zeros(d);
    if (config.lra.enabled()) {
      a.proj_weight = xavier(d, in_w, rng);
      a.proj_bias = zeros(in_w);
    }
    a.query_weight = xavier(in_w, attn_w, rng);
    a.query_bias = zeros(attn_w);
    a.key_weight = xavier(in_w, attn_w, rng);
    a.key_bias = zeros(attn_w);
    a.value_weight = xavier(in_w, attn_w, rng);
    a.value_bias = zeros(attn_w);
    a.out_weight = xavier(attn_w, d, rng);
    a.out_bias = zeros(d);
    a.head_width = config.head_width();
    a.heads = head_layout(config.num_heads, a.head_width, {});
    a.scale = 1.0f / std::sqrt(static_cast<float>(a.head_width));

    FeedForwardBlock& f = b.ffn;
    f.norm_gain = ones(d);
    f.norm_bias = zeros(d);
    f.fc1_weight = xavier(d, config.mlp_dim, rng);
    f.fc1_bias = zeros(config.mlp_dim);
    f.fc2_weight = xavier(config.mlp_dim, d, rng);
    f.fc2_bias = zeros(d);
    m.blocks.push_back(std::move(b));
  }
  m.norm_gain = ones(d);
  m.norm_bias = zeros(d);
  std::size_t head_in = d;
  if (config.head_hidden) {
    m.head_hidden_weight = xavier(d, *config.head_hidden, rng);
    m.head_hidden_bias = zeros(*config.head_hidden);
    head_in = *config.head_hidden;
  }
  m.head_weight = xavier(head_in, config.num_classes, rng);
  m.head_bias = zeros(config.num_classes);
  return m;
}

VitModel VitModel::clone() const {
  VitModel m = *this;
  m.patch_weight = copy_of(patch_weight);
  m.patch_bias = copy_of(patch_bias);
  m.cls_token = copy_of(cls_token);
  m.pos_embed = copy_of(pos_embed);
  for (TransformerBlock& b : m.blocks) {
    for (Tensor* t : {&b.attn.norm_gain, &b.attn.norm_bias, &b.attn.proj_weight, &b.attn.proj_bias,
                      &b.attn.query_weight, &b.attn.query_bias, &b.attn.key_weight, &b.attn.key_bias,
                      &b.attn.value_weight, &b.attn.value_bias, &b.attn.out_weight, &b.attn.out_bias,
                      &b.attn.mask_in, &b.attn.mask_out, &b.ffn.norm_gain, &b.ffn.norm_bias, &b.ffn.fc1_weight,
                      &b.ffn.fc1_bias, &b.ffn.fc2_weight, &b.ffn.fc2_bias, &b.ffn.mask}) {
      *t = copy_of(*t);
    }
  }
  m.norm_gain = copy_of(norm_gain);
  m.norm_bias = copy_of(norm_bias);
  m.head_hidden_weight = copy_of(head_hidden_weight);
  m.head_hidden_bias = copy_of(head_hidden_bias);
  m.head_weight = copy_of(head_weight);
  m.head_bias = copy_of(head_bias);
  return m;
}

std::vector<std::pair<std::string, Tensor>> VitModel::named_parameters(bool include_masks) const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto put = [&](std::string name, const Tensor& t) {
    if (t.defined()) out.emplace_back(std::move(name), t);
  };
  put("patch_embed.weight", patch_weight);
  put("patch_embed.bias", patch_bias);
  put("cls_token", cls_token);
  put("pos_embed", pos_embed);
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    const AttentionBlock& a = blocks[l].attn;
    put(p + "attn.norm.gain", a.norm_gain);
    put(p + "attn.norm.bias", a.norm_bias);
    put(p + "attn.proj.weight", a.proj_weight);
    put(p + "attn.proj.bias", a.proj_bias);
    put(p + "attn.query.weight", a.query_weight);
    put(p + "attn.query.bias", a.query_bias);
    put(p + "attn.key.weight", a.key_weight);
    put(p + "attn.key.bias", a.key_bias);
    put(p + "attn.value.weight", a.value_weight);
    put(p + "attn.value.bias", a.value_bias);
    put(p + "attn.out.weight", a.out_weight);
    put(p + "attn.out.bias", a.out_bias);
    if (include_masks) {
      put(p + "attn.mask_in", a.mask_in);
      put(p + "attn.mask_out", a.mask_out);
    }
    const FeedForwardBlock& f = blocks[l].ffn;
    put(p + "ffn.norm.gain", f.norm_gain);
    put(p + "ffn.norm.bias", f.norm_bias);
    put(p + "ffn.fc1.weight", f.fc1_weight);
    put(p + "ffn.fc1.bias", f.fc1_bias);
    put(p + "ffn.fc2.weight", f.fc2_weight);
    put(p + "ffn.fc2.bias", f.fc2_bias);
    if (include_masks) put(p + "ffn.mask", f.mask);
  }
  put("norm.gain", norm_gain);
  put("norm.bias", norm_bias);
  put("head.hidden.weight", head_hidden_weight);
  put("head.hidden.bias", head_hidden_bias);
  put("head.out.weight", head_weight);
  put("head.out.bias", head_bias);
  return out;
}

std::vector<Tensor> VitModel::parameters(bool include_masks) const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters(include_masks)) out.push_back(t);
  return out;
}

bool VitModel::has_masks() const {
  for (const TransformerBlock& b : blocks)
    if (b.attn.mask_in.defined() || b.attn.mask_out.defined() || b.ffn.mask.defined()) return true;
  return false;
}

bool VitModel::is_compacted() const {
  for (const TransformerBlock& b : blocks)
    if (!b.attn.in_keep.empty() || !b.attn.out_keep.empty() || !b.ffn.keep.empty()) return true;
  return false;
}

void VitModel::set_requires_grad(bool value) {
  for (Tensor& t : parameters(true)) t.set_requires_grad(value);
}

Tensor patchify(std::span<const float> image, std::size_t h, std::size_t w, std::size_t c, std::size_t patch) {
  if (patch == 0 || h % patch != 0 || w % patch != 0) {
    throw Error(ErrorCode::NotDivisible, "image " + std::to_string(h) + "x" + std::to_string(w) +
                                             " not divisible by patch " + std::to_string(patch));
  }
  if (image.size() != h * w * c) throw Error(ErrorCode::DimensionMismatch, "image buffer size mismatch");
  const std::size_t rows = h / patch;
  const std::size_t cols = w / patch;
  const std::size_t width = patch * patch * c;
  std::vector<float> out(rows * cols * width);
  for (std::size_t pr = 0; pr < rows; ++pr) {
    for (std::size_t pc = 0; pc < cols; ++pc) {
      float* dst = out.data() + (pr * cols + pc) * width;
      for (std::size_t i = 0; i < patch; ++i) {
        const float* src = image.data() + ((pr * patch + i) * w + pc * patch) * c;
        std::copy_n(src, patch * c, dst + i * patch * c);
      }
    }
  }
  return Tensor({rows * cols, width}, std::move(out));
}

Tensor patchify_batch(const Tensor& images, std::size_t patch) {
  if (images.rank() != 4) throw Error(ErrorCode::DimensionMismatch, "images must be B x H x W x C");
  const std::size_t batch = images.dim(0);
  const std::size_t h = images.dim(1);
  const std::size_t w = images.dim(2);
  const std::size_t c = images.dim(3);
  const std::size_t per_image = h * w * c;
  std::vector<float> out;
  std::size_t tokens = 0;
  std::size_t width = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    Tensor p = patchify(images.values().subspan(b * per_image, per_image), h, w, c, patch);
    tokens = p.dim(0);
    width = p.dim(1);
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  if (batch == 0) {
    patchify(std::vector<float>(per_image), h, w, c, patch);
    tokens = (h / patch) * (w / patch);
    width = patch * patch * c;
  }
  return Tensor({batch, tokens, width}, std::move(out));
}

namespace {

// Eval passes and p == 0 never draw, so a missing stream is only an error
// when dropout would actually sample.
Rng& dropout_rng(ForwardContext& ctx, float p) {
  if (ctx.rng) return *ctx.rng;
  if (ctx.training && p > 0.0f) throw Error(ErrorCode::InvalidConfig, "training forward with dropout needs an Rng");
  thread_local Rng unused(0);
  return unused;
}

}  // namespace

Tensor embed(const Tensor& patches, const VitModel& model, ForwardContext& ctx) {
  const ModelConfig& cfg = model.config;
  if (patches.rank() != 3 || patches.dim(1) != cfg.num_patches() || patches.dim(2) != cfg.patch_dim()) {
    throw Error(ErrorCode::DimensionMismatch, "patches " + shape_to_string(patches.shape()) + " do not match config");
  }
  Tensor x = add(matmul(patches, model.patch_weight), model.patch_bias);
  x = prepend_token(x, model.cls_token);
  x = add(x, model.pos_embed);
  return dropout(x, cfg.dropout, ctx.training, dropout_rng(ctx, cfg.dropout));
}

Tensor attention_forward(const Tensor& h, const AttentionBlock& attn, float dropout_p, ForwardContext& ctx) {
  if (h.rank() != 3) throw Error(ErrorCode::DimensionMismatch, "attention input must be B x T x width");
  Tensor x = h;
  if (attn.proj_weight.defined()) x = add(matmul(x, attn.proj_weight), attn.proj_bias);
  if (attn.mask_in.defined()) x = mul(x, attn.mask_in);
  const Tensor q = add(matmul(x, attn.query_weight), attn.query_bias);
  const Tensor k = add(matmul(x, attn.key_weight), attn.key_bias);
  const Tensor v = add(matmul(x, attn.value_weight), attn.value_bias);

  std::vector<Tensor> outputs;
  outputs.reserve(attn.heads.size());
  for (const HeadSlice& head : attn.heads) {
    const Tensor qh = slice_last(q, head.qk_offset, attn.head_width);
    const Tensor kh = slice_last(k, head.qk_offset, attn.head_width);
    const Tensor vh = slice_last(v, head.v_offset, head.v_width);
    const Tensor weights = softmax_rows(scale(bmm(qh, kh, /*transpose_b=*/true), attn.scale));
    outputs.push_back(bmm(weights, vh));
  }
  Tensor o = outputs.size() == 1 ? outputs[0] : concat_last(outputs);
  if (attn.mask_out.defined()) o = mul(o, attn.mask_out);
  const Tensor y = add(matmul(o, attn.out_weight), attn.out_bias);
  return dropout(y, dropout_p, ctx.training, dropout_rng(ctx, dropout_p));
}

Tensor attention_sublayer(const Tensor& x, const AttentionBlock& attn, float dropout_p, ForwardContext& ctx) {
  const Tensor h = layer_norm(x, attn.norm_gain, attn.norm_bias, kLayerNormEps, attn.in_keep);
  return attention_forward(h, attn, dropout_p, ctx);
}

Tensor ffn_forward(const Tensor& h, const FeedForwardBlock& ffn, float dropout_p, ForwardContext& ctx) {
  Tensor hidden = gelu(add(matmul(h, ffn.fc1_weight), ffn.fc1_bias));
  hidden = dropout(hidden, dropout_p, ctx.training, dropout_rng(ctx, dropout_p));
  if (ffn.mask.defined()) hidden = mul(hidden, ffn.mask);
  const Tensor y = add(matmul(hidden, ffn.fc2_weight), ffn.fc2_bias);
  return dropout(y, dropout_p, ctx.training, dropout_rng(ctx, dropout_p));
}

Tensor block_forward(const Tensor& x, const TransformerBlock& block, const ModelConfig& config,
                     ForwardContext& ctx) {
  Tensor out = add(x, attention_sublayer(x, block.attn, config.dropout, ctx));
  const Tensor h = layer_norm(out, block.ffn.norm_gain, block.ffn.norm_bias);
  return add(out, ffn_forward(h, block.ffn, config.dropout, ctx));
}

Tensor forward_patches(const VitModel& model, const Tensor& patches, ForwardContext& ctx) {
  Tensor x = embed(patches, model, ctx);
  for (const TransformerBlock& block : model.blocks) x = block_forward(x, block, model.config, ctx);
  Tensor cls = select_token(x, 0);
  cls = layer_norm(cls, model.norm_gain, model.norm_bias);
  if (model.head_hidden_weight.defined()) {
    cls = gelu(add(matmul(cls, model.head_hidden_weight), model.head_hidden_bias));
    cls = dropout(cls, model.config.dropout, ctx.training, dropout_rng(ctx, model.config.dropout));
  }
  return add(matmul(cls, model.head_weight), model.head_bias);
}

Tensor model_forward(const VitModel& model, const Tensor& images, ForwardContext& ctx) {
  const ModelConfig& cfg = model.config;
  if (images.rank() != 4 || images.dim(1) != cfg.image_h || images.dim(2) != cfg.image_w ||
      images.dim(3) != cfg.channels) {
    throw Error(ErrorCode::DimensionMismatch, "images " + shape_to_string(images.shape()) + " do not match config");
  }
  return forward_patches(model, patchify_batch(images, cfg.patch_size), ctx);
}

std::size_t count_parameters(const VitModel& model) {
  std::size_t total = 0;
  for (const auto& [name, t] : model.named_parameters(false)) total += t.numel();
  return total;
}

std::size_t count_parameters(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.embed_dim;
  const std::size_t in_w = config.attention_input_width();
  const std::size_t attn_w = config.attention_width();
  std::size_t total = config.patch_dim() * d + d + d + config.seq_len() * d;
  std::size_t block = 2 * d;
  if (config.lra.enabled()) block += d * in_w + in_w;
  block += 3 * (in_w * attn_w + attn_w) + attn_w * d + d;
  block += 2 * d + d * config.mlp_dim + config.mlp_dim + config.mlp_dim * d + d;
  total += config.num_layers * block;
  total += 2 * d;
  const std::size_t classes = config.num_classes;
  if (config.head_hidden) {
    const std::size_t hh = *config.head_hidden;
    total += d * hh + hh + hh * classes + classes;
  } else {
    total += d * classes + classes;
  }
  return total;
}

}  // namespace vitc
