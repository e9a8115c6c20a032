#include "vitc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <vector>

#include "json.hpp"
#include "vitc/error.hpp"
#include "vitc/vtp.hpp"

namespace vitc {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}

  bool at_end() const { return pos_ == bytes_.size(); }

  template <typename T>
  T get_le() {
    need(sizeof(T));
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::Io, "checkpoint ends unexpectedly");
  }

  std::vector<std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

json config_to_json(const ModelConfig& c) {
  json j;
  j["image_h"] = c.image_h;
  j["image_w"] = c.image_w;
  j["channels"] = c.channels;
  j["patch_size"] = c.patch_size;
  j["embed_dim"] = c.embed_dim;
  j["mlp_dim"] = c.mlp_dim;
  j["num_layers"] = c.num_layers;
  j["num_heads"] = c.num_heads;
  j["num_classes"] = c.num_classes;
  j["head_hidden"] = c.head_hidden ? json(*c.head_hidden) : json(nullptr);
  j["dropout"] = c.dropout;
  j["lra"] = {{"variant", std::string(to_string(c.lra.variant))}, {"rank", c.lra.rank}};
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.image_h = j.at("image_h").get<std::size_t>();
  c.image_w = j.at("image_w").get<std::size_t>();
  c.channels = j.at("channels").get<std::size_t>();
  c.patch_size = j.at("patch_size").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.mlp_dim = j.at("mlp_dim").get<std::size_t>();
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  if (!j.at("head_hidden").is_null()) c.head_hidden = j.at("head_hidden").get<std::size_t>();
  c.dropout = j.at("dropout").get<float>();
  c.lra.variant = parse_lra_variant(j.at("lra").at("variant").get<std::string>());
  c.lra.rank = j.at("lra").at("rank").get<std::size_t>();
  return c;
}

// Binary mask over the full original width that keeps exactly `keep`.
BinaryMask keep_to_binary(std::size_t block, MaskSite site, const std::vector<int>& keep, std::size_t width) {
  BinaryMask b{block, site, std::vector<std::uint8_t>(width, 0)};
  for (int i : keep) {
    if (i < 0 || static_cast<std::size_t>(i) >= width) {
      throw Error(ErrorCode::ShapeMismatch, "kept index " + std::to_string(i) + " out of range");
    }
    b.keep[static_cast<std::size_t>(i)] = 1;
  }
  return b;
}

}  // namespace

std::string checkpoint_config_json(const VitModel& model) {
  json doc;
  doc["model"] = config_to_json(model.config);
  json blocks = json::array();
  for (const TransformerBlock& b : model.blocks) {
    blocks.push_back({{"attn_in_keep", b.attn.in_keep},
                      {"attn_out_keep", b.attn.out_keep},
                      {"ffn_keep", b.ffn.keep},
                      {"mask_attn", b.attn.mask_in.defined()},
                      {"mask_ffn", b.ffn.mask.defined()}});
  }
  doc["blocks"] = blocks;
  return doc.dump();
}

void save_checkpoint(const VitModel& model, const fs::path& path) {
  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  const std::string cfg = checkpoint_config_json(model);
  put_le<std::uint64_t>(out, cfg.size());
  out.insert(out.end(), cfg.begin(), cfg.end());
  for (const auto& [name, t] : model.named_parameters(true)) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_le<std::uint64_t>(out, d);
    for (float v : t.values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(ErrorCode::Io, "short write to " + path.string());
}

VitModel load_checkpoint(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  Reader in(std::vector<std::uint8_t>((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>()));

  if (in.get_string(4) != std::string(kCheckpointMagic, 4)) throw Error(ErrorCode::BadMagic, path.string());
  const auto version = in.get_le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::VersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                                std::to_string(kCheckpointVersion));
  }
  const auto json_len = in.get_le<std::uint64_t>();
  json doc;
  try {
    doc = json::parse(in.get_string(json_len));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Io, std::string("bad checkpoint config: ") + e.what());
  }

  std::map<std::string, Tensor> table;
  while (!in.at_end()) {
    const std::string name = in.get_string(in.get_le<std::uint32_t>());
    const auto rank = in.get_le<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = in.get_le<std::uint64_t>();
    std::vector<float> values(shape_numel(shape));
    for (float& v : values) v = std::bit_cast<float>(in.get_le<std::uint32_t>());
    table.emplace(name, Tensor(std::move(shape), std::move(values), true));
  }

  // Rebuild the structure the config describes, then bind the stored tensors.
  VitModel model;
  try {
    const ModelConfig config = config_from_json(doc.at("model"));
    model = VitModel::create(config, 0);
    const json& blocks = doc.at("blocks");
    if (blocks.size() != model.blocks.size()) throw Error(ErrorCode::ShapeMismatch, "block count mismatch");
    std::vector<BinaryMask> keeps;
    for (std::size_t l = 0; l < blocks.size(); ++l) {
      const auto in_keep = blocks[l].at("attn_in_keep").get<std::vector<int>>();
      const auto out_keep = blocks[l].at("attn_out_keep").get<std::vector<int>>();
      const auto ffn_keep = blocks[l].at("ffn_keep").get<std::vector<int>>();
      TransformerBlock& b = model.blocks[l];
      if (!in_keep.empty()) {
        b.attn.mask_in = Tensor::full({config.embed_dim}, 1.0f);
        keeps.push_back(keep_to_binary(l, MaskSite::AttentionIn, in_keep, config.embed_dim));
      }
      if (!out_keep.empty()) {
        b.attn.mask_out = Tensor::full({config.attention_width()}, 1.0f);
        keeps.push_back(keep_to_binary(l, MaskSite::AttentionOut, out_keep, config.attention_width()));
      }
      if (!ffn_keep.empty()) {
        b.ffn.mask = Tensor::full({config.mlp_dim}, 1.0f);
        keeps.push_back(keep_to_binary(l, MaskSite::Ffn, ffn_keep, config.mlp_dim));
      }
    }
    if (!keeps.empty()) model = compact(model, keeps);
    for (std::size_t l = 0; l < blocks.size(); ++l) {
      TransformerBlock& b = model.blocks[l];
      if (blocks[l].at("mask_attn").get<bool>()) {
        b.attn.mask_in = Tensor::full({b.attn.query_weight.dim(0)}, 1.0f, true);
        b.attn.mask_out = Tensor::full({b.attn.value_weight.dim(1)}, 1.0f, true);
      }
      if (blocks[l].at("mask_ffn").get<bool>()) b.ffn.mask = Tensor::full({b.ffn.fc1_weight.dim(1)}, 1.0f, true);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Io, std::string("bad checkpoint config: ") + e.what());
  }

  std::size_t bound = 0;
  for (auto& [name, slot] : model.named_parameters(true)) {
    auto it = table.find(name);
    if (it == table.end()) throw Error(ErrorCode::ShapeMismatch, "checkpoint lacks tensor " + name);
    if (it->second.shape() != slot.shape()) {
      throw Error(ErrorCode::ShapeMismatch, name + ": stored " + shape_to_string(it->second.shape()) +
                                                ", config implies " + shape_to_string(slot.shape()));
    }
    std::span<float> dst = slot.mutable_values();
    std::copy(it->second.values().begin(), it->second.values().end(), dst.begin());
    ++bound;
  }
  if (bound != table.size()) throw Error(ErrorCode::ShapeMismatch, "checkpoint holds tensors the config does not use");
  return model;
}

}  // namespace vitc
