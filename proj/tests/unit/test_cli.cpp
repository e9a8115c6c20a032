#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "temp_dir.hpp"

using vitc::testing::TempDir;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "vitc");
  std::ostringstream out, err;
  const int code = vitc::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t value_after(const std::string& text, const std::string& key) {
  const auto pos = text.find(key + " ");
  REQUIRE(pos != std::string::npos);
  return std::stoul(text.substr(pos + key.size() + 1));
}

void write_tiny_config(const std::filesystem::path& path) {
  std::ofstream(path) << "image_h = 8\nimage_w = 8\npatch_size = 4\nembed_dim = 16\nmlp_dim = 32\n"
                         "num_layers = 2\nnum_heads = 4\nnum_classes = 5\nhead_hidden = 16\ndropout = 0\n"
                         "batch_size = 16\n";
}

std::vector<std::string> synthetic_flags() {
  return {"--synthetic", "--synthetic-test", "40"};
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  auto r = run({});
  CHECK(r.code == 1);
  CHECK(r.err.find("UNKNOWN_SUBCOMMAND") != std::string::npos);

  r = run({"frobnicate"});
  CHECK(r.code == 1);
  CHECK(r.err.find("UNKNOWN_SUBCOMMAND") != std::string::npos);

  r = run({"prune", "--ckpt", "a", "--rate", "1.5", "--out", "b"});
  CHECK(r.code == 1);
  CHECK(r.err.find("BAD_FLAG") != std::string::npos);

  r = run({"prune", "--ckpt", "a", "--rate", "-0.1", "--out", "b"});
  CHECK(r.code == 1);

  r = run({"train", "--out", "x", "--masks", "sideways", "--synthetic"});
  CHECK(r.code == 1);
  CHECK(r.err.find("BAD_FLAG") != std::string::npos);

  r = run({"train", "--out", "x", "--lra", "dxk", "--synthetic"});
  CHECK(r.code == 1);

  r = run({"eval", "--ckpt", "x", "--nonsense"});
  CHECK(r.code == 1);
  CHECK(r.err.find("BAD_FLAG") != std::string::npos);
}

TEST_CASE("help exits with 0 on stdout") {
  const auto r = run({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("prune") != std::string::npos);
  CHECK(r.err.empty());
}

TEST_CASE("data and model errors exit with 2") {
  TempDir dir;
  auto r = run({"eval", "--ckpt", (dir / "none.ckpt").string(), "--synthetic"});
  CHECK(r.code == 2);
  CHECK(r.err.find("MISSING_FILE") != std::string::npos);

  std::ofstream(dir / "junk.ckpt") << "not a checkpoint at all";
  r = run({"eval", "--ckpt", (dir / "junk.ckpt").string(), "--synthetic"});
  CHECK(r.code == 2);
  CHECK(r.err.find("BAD_MAGIC") != std::string::npos);

  write_tiny_config(dir / "t.cfg");
  r = run({"train", "--config", (dir / "t.cfg").string(), "--data", (dir / "nowhere").string(), "--epochs", "1",
           "--out", (dir / "m.ckpt").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("MISSING_FILE") != std::string::npos);
}

TEST_CASE("train, prune, eval and report pipeline") {
  TempDir dir;
  write_tiny_config(dir / "t.cfg");
  const std::string masked = (dir / "masked.ckpt").string();
  const std::string p3 = (dir / "p30.ckpt").string();
  const std::string p5 = (dir / "p50.ckpt").string();

  auto r = run(concat({"train", "--config", (dir / "t.cfg").string(), "--epochs", "2", "--masks", "full", "--seed",
                       "3", "--synthetic-train", "64", "--out", masked, "--log-csv", (dir / "log.csv").string()},
                      synthetic_flags()));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("epoch 1") != std::string::npos);
  const std::size_t trained = value_after(r.out, "params");

  r = run({"prune", "--ckpt", masked, "--rate", "0.3", "--out", p3});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(value_after(r.out, "params_before") == trained);
  const std::size_t after30 = value_after(r.out, "params_after");
  CHECK(after30 < trained);

  r = run({"prune", "--ckpt", masked, "--rate", "0.5", "--out", p5});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(value_after(r.out, "params_after") < after30);

  r = run(concat({"eval", "--ckpt", p3, "--seed", "3"}, synthetic_flags()));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(value_after(r.out, "params") == after30);
  CHECK(r.out.find("accuracy ") != std::string::npos);

  const std::string csv = (dir / "report.csv").string();
  r = run(concat({"report", "--base", masked, "--variants", p3, p5, "--csv", csv}, synthetic_flags()));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("p30") != std::string::npos);
  CHECK(r.out.find("p50") != std::string::npos);
  std::ifstream in(csv);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "label,accuracy,err_increase,params,mib,compression");
  CHECK(lines[1].rfind("masked,", 0) == 0);
  CHECK(lines[2].rfind("p30,", 0) == 0);
  CHECK(lines[3].rfind("p50,", 0) == 0);

  r = run({"export-masks", "--ckpt", masked, "--bins", "10", "--out", (dir / "hist").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(std::filesystem::exists(dir / "hist" / "attention_hist.csv"));
  CHECK(std::filesystem::exists(dir / "hist" / "summary.csv"));

  // A compacted checkpoint has nothing left to prune.
  r = run({"prune", "--ckpt", p3, "--rate", "0.3", "--out", (dir / "again.ckpt").string()});
  CHECK(r.code == 2);
}

TEST_CASE("same seed reproduces the epoch log") {
  TempDir dir;
  write_tiny_config(dir / "t.cfg");
  auto train_once = [&](const std::string& tag) {
    const auto log = (dir / (tag + ".csv")).string();
    const auto r = run(concat({"train", "--config", (dir / "t.cfg").string(), "--epochs", "2", "--seed", "11",
                               "--synthetic-train", "48", "--no-timing", "--out", (dir / (tag + ".ckpt")).string(),
                               "--log-csv", log},
                              synthetic_flags()));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    std::ifstream in(log);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  };
  const std::string a = train_once("a");
  CHECK(a == train_once("b"));
  CHECK(a.find("epoch,ce_loss,l1_loss,test_acc,seconds") == 0);
}

TEST_CASE("experiment subcommand prints one row per rate") {
  TempDir dir;
  write_tiny_config(dir / "t.cfg");
  const auto r = run(concat({"experiment", "--config", (dir / "t.cfg").string(), "--kind", "vtp", "--rates",
                             "0.2,0.4", "--epochs", "1", "--synthetic-train", "32"},
                            synthetic_flags()));
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("vtp(0.2)") != std::string::npos);
  CHECK(r.out.find("vtp(0.4)") != std::string::npos);
  CHECK(value_after(r.out, "training_runs") == 1);
}
