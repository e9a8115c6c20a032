#include <fstream>

#include "doctest.h"
#include "naive_attention.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"
#include "vitc/checkpoint.hpp"
#include "vitc/error.hpp"
#include "vitc/lra.hpp"
#include "vitc/vtp.hpp"

using namespace vitc;
using namespace vitc::testing;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Io;
}

void check_same(const VitModel& a, const VitModel& b) {
  CHECK(a.config == b.config);
  const auto pa = a.named_parameters(true);
  const auto pb = b.named_parameters(true);
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    CHECK(pa[i].second.shape() == pb[i].second.shape());
    CHECK(to_vector(pa[i].second) == to_vector(pb[i].second));
  }
  for (std::size_t l = 0; l < a.blocks.size(); ++l) {
    CHECK(a.blocks[l].attn.in_keep == b.blocks[l].attn.in_keep);
    CHECK(a.blocks[l].attn.out_keep == b.blocks[l].attn.out_keep);
    CHECK(a.blocks[l].ffn.keep == b.blocks[l].ffn.keep);
  }
  Rng rng(99);
  const Tensor images = random_tensor({2, a.config.image_h, a.config.image_w, a.config.channels}, rng, 1.0f, false);
  ForwardContext ctx;
  CHECK(to_vector(model_forward(a, images, ctx)) == to_vector(model_forward(b, images, ctx)));
}

VitModel masked_model(std::uint64_t seed, MaskPlacement placement = MaskPlacement::Full) {
  VitModel m = VitModel::create(tiny_config(16, 2, 4), seed);
  randomize_all(m, seed + 1);
  attach_masks(m, placement);
  Rng rng(seed + 2);
  for (MaskRef& r : collect_masks(m).masks)
    for (float& v : r.values.mutable_values()) v = rng.uniform();
  return m;
}

}  // namespace

TEST_CASE("round trips for every model family") {
  TempDir dir;
  const ModelConfig c = tiny_config(16, 2, 4);

  VitModel baseline = VitModel::create(c, 1);
  randomize_all(baseline, 2);
  save_checkpoint(baseline, dir / "base.vtck");
  check_same(baseline, load_checkpoint(dir / "base.vtck"));

  const VitModel masked = masked_model(3);
  save_checkpoint(masked, dir / "masked.vtck");
  const VitModel masked_back = load_checkpoint(dir / "masked.vtck");
  check_same(masked, masked_back);
  CHECK(masked_back.has_masks());

  const VitModel compacted = prune(masked, 0.4);
  save_checkpoint(compacted, dir / "compact.vtck");
  const VitModel compacted_back = load_checkpoint(dir / "compact.vtck");
  check_same(compacted, compacted_back);
  CHECK(count_parameters(compacted_back) == count_parameters(compacted));

  for (LraVariant v : {LraVariant::DxK, LraVariant::KxK}) {
    VitModel lra = VitModel::create(build_lra_attention(c, {v, 8}), 4);
    randomize_all(lra, 5);
    save_checkpoint(lra, dir / "lra.vtck");
    check_same(lra, load_checkpoint(dir / "lra.vtck"));
  }

  PruneConfig pc;
  pc.placement = MaskPlacement::Ffn;
  VitModel hybrid = build_hybrid(c, {LraVariant::DxK, 8}, pc, 6);
  randomize_all(hybrid, 7);
  Rng rng(8);
  for (MaskRef& r : collect_masks(hybrid).masks)
    for (float& v : r.values.mutable_values()) v = rng.uniform();
  save_checkpoint(hybrid, dir / "hybrid.vtck");
  check_same(hybrid, load_checkpoint(dir / "hybrid.vtck"));

  const VitModel hybrid_pruned = prune(hybrid, 0.5);
  save_checkpoint(hybrid_pruned, dir / "hybrid_pruned.vtck");
  check_same(hybrid_pruned, load_checkpoint(dir / "hybrid_pruned.vtck"));
}

TEST_CASE("compacted model with masks re-attached round trips") {
  TempDir dir;
  VitModel m = prune(masked_model(10), 0.3);
  attach_masks(m, MaskPlacement::Full);
  save_checkpoint(m, dir / "m.vtck");
  check_same(m, load_checkpoint(dir / "m.vtck"));
}

TEST_CASE("header errors") {
  TempDir dir;
  const VitModel m = VitModel::create(tiny_config(), 11);
  save_checkpoint(m, dir / "ok.vtck");
  std::vector<char> bytes;
  {
    std::ifstream in(dir / "ok.vtck", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& name, const std::vector<char>& b) {
    std::ofstream out(dir / name, std::ios::binary);
    out.write(b.data(), static_cast<std::streamsize>(b.size()));
  };

  auto magic = bytes;
  magic[0] = 'X';
  write("magic.vtck", magic);
  CHECK(code_of([&] { load_checkpoint(dir / "magic.vtck"); }) == ErrorCode::BadMagic);

  auto version = bytes;
  version[4] = 9;
  write("version.vtck", version);
  CHECK(code_of([&] { load_checkpoint(dir / "version.vtck"); }) == ErrorCode::VersionMismatch);

  CHECK(code_of([&] { load_checkpoint(dir / "absent.vtck"); }) == ErrorCode::MissingFile);

  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  write("trunc.vtck", truncated);
  CHECK(code_of([&] { load_checkpoint(dir / "trunc.vtck"); }) == ErrorCode::Io);
}

TEST_CASE("tensor table must agree with the config") {
  TempDir dir;
  VitModel m = VitModel::create(tiny_config(), 12);
  m.head_bias = Tensor::zeros({7}, true);
  save_checkpoint(m, dir / "bad.vtck");
  CHECK(code_of([&] { load_checkpoint(dir / "bad.vtck"); }) == ErrorCode::ShapeMismatch);

  VitModel extra = VitModel::create(tiny_config(), 13);
  extra.config.head_hidden.reset();
  save_checkpoint(extra, dir / "extra.vtck");
  CHECK(code_of([&] { load_checkpoint(dir / "extra.vtck"); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("config document is embedded as JSON") {
  const VitModel m = prune(masked_model(14), 0.25);
  const std::string doc = checkpoint_config_json(m);
  CHECK(doc.find("\"embed_dim\":16") != std::string::npos);
  CHECK(doc.find("ffn_keep") != std::string::npos);
}
