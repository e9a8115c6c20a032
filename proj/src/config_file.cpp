#include "vitc/config_file.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "vitc/error.hpp"

namespace vitc {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_integer(std::string_view key, std::string_view value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw Error(ErrorCode::InvalidConfig, std::string(key) + ": expected a non-negative integer, got '" +
                                              std::string(value) + "'");
  }
  return out;
}

double parse_real(std::string_view key, std::string_view value) {
  const std::string text(value);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw Error(ErrorCode::InvalidConfig, std::string(key) + ": expected a number, got '" + text + "'");
  }
  return out;
}

}  // namespace

void apply_setting(RunConfig& c, std::string_view key, std::string_view value) {
  using Sz = std::size_t;
  ModelConfig& m = c.model;
  TrainConfig& t = c.train;
  if (key == "image_h") m.image_h = parse_integer<Sz>(key, value);
  else if (key == "image_w") m.image_w = parse_integer<Sz>(key, value);
  else if (key == "channels") m.channels = parse_integer<Sz>(key, value);
  else if (key == "patch_size") m.patch_size = parse_integer<Sz>(key, value);
  else if (key == "embed_dim") m.embed_dim = parse_integer<Sz>(key, value);
  else if (key == "mlp_dim") m.mlp_dim = parse_integer<Sz>(key, value);
  else if (key == "num_layers") m.num_layers = parse_integer<Sz>(key, value);
  else if (key == "num_heads") m.num_heads = parse_integer<Sz>(key, value);
  else if (key == "num_classes") m.num_classes = parse_integer<Sz>(key, value);
  else if (key == "head_hidden") {
    if (value == "none") m.head_hidden.reset();
    else m.head_hidden = parse_integer<Sz>(key, value);
  } else if (key == "dropout") m.dropout = static_cast<float>(parse_real(key, value));
  else if (key == "lra" || key == "variant") m.lra.variant = parse_lra_variant(value);
  else if (key == "rank") m.lra.rank = parse_integer<Sz>(key, value);
  else if (key == "epochs") t.epochs = parse_integer<Sz>(key, value);
  else if (key == "batch_size") t.batch_size = parse_integer<Sz>(key, value);
  else if (key == "lr") t.lr = static_cast<float>(parse_real(key, value));
  else if (key == "lambda") {
    t.lambda = static_cast<float>(parse_real(key, value));
    c.prune.lambda = t.lambda;
  } else if (key == "seed") t.seed = parse_integer<std::uint64_t>(key, value);
  else if (key == "eval_every") t.eval_every = parse_integer<Sz>(key, value);
  else if (key == "train_limit") t.train_limit = parse_integer<Sz>(key, value);
  else if (key == "test_limit") t.test_limit = parse_integer<Sz>(key, value);
  else if (key == "prune_rate") c.prune.prune_rate = parse_real(key, value);
  else if (key == "placement" || key == "masks") c.prune.placement = parse_mask_placement(value);
  else throw Error(ErrorCode::InvalidConfig, "unknown config key '" + std::string(key) + "'");
}

RunConfig parse_run_config(std::string_view text, RunConfig config) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(line_no) + ": expected key = value");
    }
    try {
      apply_setting(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(ErrorCode::InvalidConfig, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig defaults) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), std::move(defaults));
}

std::string to_config_text(const RunConfig& c) {
  const ModelConfig& m = c.model;
  const TrainConfig& t = c.train;
  char real[64];
  auto r = [&](double v) {
    std::snprintf(real, sizeof real, "%.9g", v);
    return std::string(real);
  };
  std::ostringstream out;
  out << "image_h = " << m.image_h << "\nimage_w = " << m.image_w << "\nchannels = " << m.channels
      << "\npatch_size = " << m.patch_size << "\nembed_dim = " << m.embed_dim << "\nmlp_dim = " << m.mlp_dim
      << "\nnum_layers = " << m.num_layers << "\nnum_heads = " << m.num_heads << "\nnum_classes = " << m.num_classes
      << "\nhead_hidden = " << (m.head_hidden ? std::to_string(*m.head_hidden) : std::string("none"))
      << "\ndropout = " << r(m.dropout) << "\nlra = " << to_string(m.lra.variant) << "\nrank = " << m.lra.rank
      << "\nepochs = " << t.epochs << "\nbatch_size = " << t.batch_size << "\nlr = " << r(t.lr)
      << "\nlambda = " << r(t.lambda) << "\nseed = " << t.seed << "\neval_every = " << t.eval_every
      << "\ntrain_limit = " << t.train_limit << "\ntest_limit = " << t.test_limit
      << "\nprune_rate = " << r(c.prune.prune_rate) << "\nplacement = " << to_string(c.prune.placement) << '\n';
  return out.str();
}

}  // namespace vitc
