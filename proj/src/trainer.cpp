#include "vitc/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "vitc/adam.hpp"
#include "vitc/error.hpp"
#include "vitc/ops.hpp"
#include "vitc/rng.hpp"

namespace vitc {

namespace {

// Dropout stream is separate from the shuffle stream so the permutation of
// epoch e depends on nothing but (seed, e).
constexpr std::uint64_t kDropoutStream = 0x9e3779b97f4a7c15ULL;

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed ^ static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

void check_compatible(const VitModel& model, const Dataset& data) {
  const ModelConfig& c = model.config;
  if (data.height != c.image_h || data.width != c.image_w || data.channels != c.channels) {
    throw Error(ErrorCode::ShapeMismatch, "dataset images do not match the model input size");
  }
  if (data.num_classes > c.num_classes) {
    throw Error(ErrorCode::ShapeMismatch, "dataset has more classes than the model outputs");
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw Error(ErrorCode::InvalidConfig, "batch_size must be at least 1");
  if (!(lr > 0.0f)) throw Error(ErrorCode::InvalidConfig, "learning rate must be positive");
  if (lambda < 0.0f) throw Error(ErrorCode::InvalidConfig, "lambda must be non-negative");
}

std::vector<EpochLog> train(VitModel& model, const Dataset& train_set, const Dataset& test_set,
                            const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  std::vector<EpochLog> log;
  if (config.epochs == 0) return log;
  const Dataset train_data = train_set.head(config.train_limit);
  const Dataset test_data = test_set.head(config.test_limit);
  if (train_data.empty()) throw Error(ErrorCode::EmptyDataset, "training set is empty");
  check_compatible(model, train_data);

  model.set_requires_grad(true);
  Adam optimizer(model.parameters(true), AdamOptions{config.lr});
  const MaskSet masks = collect_masks(model);
  Rng dropout_rng(config.seed ^ kDropoutStream);
  ForwardContext ctx{true, &dropout_rng};

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const std::vector<std::size_t> order = epoch_permutation(train_data.size(), config.seed, epoch);
    double ce_sum = 0.0;
    double l1_sum = 0.0;
    for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - first);
      const std::span<const std::size_t> idx(order.data() + first, n);
      const Tensor images = train_data.batch(idx);
      const std::vector<int> labels = train_data.batch_labels(idx);

      const Tensor logits = model_forward(model, images, ctx);
      const Tensor ce = cross_entropy_loss(logits, labels);
      Tensor loss = ce;
      double l1_value = 0.0;
      if (!masks.empty()) {
        const Tensor l1 = sparsity_loss(masks, config.lambda);
        l1_value = l1.item();
        loss = add(ce, l1);
      }
      ce_sum += static_cast<double>(ce.item()) * static_cast<double>(n);
      l1_sum += l1_value * static_cast<double>(n);

      optimizer.zero_grad();
      backward(loss);
      optimizer.step();
    }
    optimizer.zero_grad();

    EpochLog entry;
    entry.epoch = epoch;
    entry.ce_loss = ce_sum / static_cast<double>(train_data.size());
    entry.l1_loss = l1_sum / static_cast<double>(train_data.size());
    if (config.eval_every != 0 && !test_data.empty() &&
        ((epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs)) {
      entry.test_acc = evaluate(model, test_data);
    }
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return log;
}

Tensor predict_logits(const VitModel& model, const Dataset& dataset, std::size_t batch_size) {
  if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "evaluation set is empty");
  check_compatible(model, dataset);
  if (batch_size == 0) batch_size = dataset.size();
  NoGradGuard no_grad;
  ForwardContext ctx{false, nullptr};
  std::vector<float> out;
  out.reserve(dataset.size() * model.config.num_classes);
  std::vector<std::size_t> idx;
  for (std::size_t first = 0; first < dataset.size(); first += batch_size) {
    const std::size_t n = std::min(batch_size, dataset.size() - first);
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), first);
    const Tensor logits = model_forward(model, dataset.batch(idx), ctx);
    out.insert(out.end(), logits.values().begin(), logits.values().end());
  }
  return Tensor({dataset.size(), model.config.num_classes}, std::move(out));
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw Error(ErrorCode::DimensionMismatch, "argmax expects a matrix");
  const std::size_t rows = logits.dim(0);
  const std::size_t cols = logits.dim(1);
  std::vector<int> out(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = logits.values().data() + r * cols;
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c)
      if (row[c] > row[best]) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

double accuracy_from_logits(const Tensor& logits, std::span<const int> labels) {
  if (labels.empty()) throw Error(ErrorCode::EmptyDataset, "no labels to score");
  const std::vector<int> pred = argmax_rows(logits);
  if (pred.size() != labels.size()) throw Error(ErrorCode::DimensionMismatch, "logit rows do not match labels");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i] ? 1 : 0;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());
}

double evaluate(const VitModel& model, const Dataset& dataset, std::size_t batch_size) {
  return accuracy_from_logits(predict_logits(model, dataset, batch_size), dataset.labels);
}

namespace {

std::string num(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

void write_epoch_csv(std::ostream& out, const std::vector<EpochLog>& log, bool include_timing) {
  out << "epoch,ce_loss,l1_loss,test_acc,seconds\n";
  for (const EpochLog& e : log) {
    out << e.epoch << ',' << num("%.9g", e.ce_loss) << ',' << num("%.9g", e.l1_loss) << ','
        << (e.test_acc ? num("%.4f", *e.test_acc) : "") << ',' << (include_timing ? num("%.3f", e.seconds) : "")
        << '\n';
  }
}

std::string format_epoch_line(const EpochLog& e) {
  std::string line = "epoch " + std::to_string(e.epoch) + "  ce " + num("%.5f", e.ce_loss) + "  l1 " +
                     num("%.5f", e.l1_loss);
  if (e.test_acc) line += "  test_acc " + num("%.2f%%", *e.test_acc);
  line += "  " + num("%.1fs", e.seconds);
  return line;
}

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Baseline: return "baseline";
    case ExperimentKind::Vtp: return "vtp";
    case ExperimentKind::Lra: return "lra";
    case ExperimentKind::Hybrid: return "hybrid";
  }
  return "baseline";
}

ExperimentKind parse_experiment_kind(std::string_view text) {
  for (auto k : {ExperimentKind::Baseline, ExperimentKind::Vtp, ExperimentKind::Lra, ExperimentKind::Hybrid})
    if (text == to_string(k)) return k;
  throw Error(ErrorCode::InvalidConfig, "unknown experiment kind '" + std::string(text) + "'");
}

namespace {

std::string rate_label(std::string_view prefix, double rate) {
  return std::string(prefix) + num("(%g)", rate);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec, const Dataset& train_set, const Dataset& test_set) {
  ExperimentResult result;
  const TrainConfig& tc = spec.train;
  const Dataset test_data = test_set.head(tc.test_limit);

  auto trained = [&](VitModel model) {
    result.logs.push_back(train(model, train_set, test_set, tc));
    ++result.training_runs;
    return model;
  };
  auto add_base = [&](const std::string& label, const VitModel& model) {
    result.report.set_base(label, evaluate(model, test_data), count_parameters(model));
    result.models.push_back(model);
  };
  auto add_row = [&](const std::string& label, const VitModel& model) {
    result.report.add(label, evaluate(model, test_data), count_parameters(model));
    result.models.push_back(model);
  };
  auto baseline = [&]() {
    ModelConfig cfg = spec.model;
    cfg.lra = {};
    return spec.base ? *spec.base : trained(VitModel::create(cfg, tc.seed));
  };

  switch (spec.kind) {
    case ExperimentKind::Baseline:
      add_base("baseline", baseline());
      break;
    case ExperimentKind::Vtp: {
      if (spec.rates.empty()) throw Error(ErrorCode::InvalidConfig, "vtp experiment needs at least one prune rate");
      ModelConfig cfg = spec.model;
      cfg.lra = {};
      VitModel masked = VitModel::create(cfg, tc.seed);
      attach_masks(masked, spec.placement);
      masked = trained(std::move(masked));
      add_base("baseline", spec.base ? *spec.base : masked);
      for (double rate : spec.rates) add_row(rate_label("vtp", rate), prune(masked, rate));
      break;
    }
    case ExperimentKind::Lra: {
      const VitModel base = baseline();
      const ModelConfig cfg = build_lra_attention(spec.model, spec.lra);
      const VitModel lra = trained(VitModel::create(cfg, tc.seed));
      add_base("baseline", base);
      add_row(std::string("lra_") + std::string(to_string(spec.lra.variant)) + "(" +
                  std::to_string(spec.lra.rank) + ")",
              lra);
      break;
    }
    case ExperimentKind::Hybrid: {
      if (spec.rates.empty()) throw Error(ErrorCode::InvalidConfig, "hybrid experiment needs at least one prune rate");
      const VitModel base = baseline();
      PruneConfig pc;
      pc.lambda = tc.lambda;
      pc.placement = MaskPlacement::Ffn;
      const VitModel hybrid = trained(build_hybrid(spec.model, spec.lra, pc, tc.seed));
      add_base("baseline", base);
      for (double rate : spec.rates) add_row(rate_label("hybrid", rate), prune(hybrid, rate));
      break;
    }
  }
  return result;
}

}  // namespace vitc
