#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "vitc/data.hpp"
#include "vitc/lra.hpp"
#include "vitc/model.hpp"
#include "vitc/report.hpp"
#include "vitc/vtp.hpp"

namespace vitc {

struct TrainConfig {
  std::size_t epochs = 15;
  std::size_t batch_size = 64;
  float lr = 1e-4f;
  float lambda = 1e-4f;
  std::uint64_t seed = 0;
  // Evaluate on the test set after every eval_every-th epoch (0 = never).
  std::size_t eval_every = 1;
  // Subset sizes; 0 uses the whole split.
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  // Sample-weighted means over the epoch; ce_loss + l1_loss is the mean
  // optimized loss.
  double ce_loss = 0.0;
  double l1_loss = 0.0;
  std::optional<double> test_acc;
  double seconds = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Adam over every parameter (masks included), L1 term iff masks are
// attached. `test` may be empty, in which case no evaluation happens.
// Throws EmptyDataset for an empty training set when epochs > 0.
std::vector<EpochLog> train(VitModel& model, const Dataset& train_set, const Dataset& test_set,
                            const TrainConfig& config, const EpochCallback& on_epoch = {});

// Eval-mode logits, (N x num_classes), computed in batches without a graph.
Tensor predict_logits(const VitModel& model, const Dataset& dataset, std::size_t batch_size = 256);

// Argmax per row, lowest class index on ties.
std::vector<int> argmax_rows(const Tensor& logits);
double accuracy_from_logits(const Tensor& logits, std::span<const int> labels);

// Percent correct. Throws EmptyDataset.
double evaluate(const VitModel& model, const Dataset& dataset, std::size_t batch_size = 256);

// One row per epoch: epoch,ce_loss,l1_loss,test_acc,seconds. With
// include_timing off the seconds column is left blank, so two runs of the
// same seed produce identical bytes.
void write_epoch_csv(std::ostream& out, const std::vector<EpochLog>& log, bool include_timing = true);
std::string format_epoch_line(const EpochLog& entry);

enum class ExperimentKind { Baseline, Vtp, Lra, Hybrid };

std::string_view to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(std::string_view text);

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::Baseline;
  ModelConfig model;
  TrainConfig train;
  // Prune rates for Vtp and Hybrid.
  std::vector<double> rates;
  MaskPlacement placement = MaskPlacement::Full;
  LraConfig lra;
  // Trained reference for the base row. When absent, Lra and Hybrid train a
  // baseline; Vtp uses its own masked model before thresholding.
  std::optional<VitModel> base;
};

struct ExperimentResult {
  CompressionReport report;
  std::size_t training_runs = 0;
  std::vector<std::vector<EpochLog>> logs;
  std::vector<VitModel> models;  // same order as report rows
};

ExperimentResult run_experiment(const ExperimentSpec& spec, const Dataset& train_set, const Dataset& test_set);

}  // namespace vitc
