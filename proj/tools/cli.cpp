#include "cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "vitc/checkpoint.hpp"
#include "vitc/config_file.hpp"
#include "vitc/data.hpp"
#include "vitc/error.hpp"
#include "vitc/lra.hpp"
#include "vitc/report.hpp"
#include "vitc/trainer.hpp"
#include "vitc/vtp.hpp"

namespace vitc::cli {

namespace {

namespace fs = std::filesystem;

// Usage problems found after CLI11 has accepted the flags.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataOptions {
  std::string dir;
  bool synthetic = false;
  std::size_t synthetic_train = 2000;
  std::size_t synthetic_test = 1000;
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;
  std::uint64_t seed = 0;

  void add_to(CLI::App& cmd, bool with_train) {
    auto* data = cmd.add_option("--data", dir, "CIFAR-10 binary directory");
    auto* synth = cmd.add_flag("--synthetic", synthetic, "Use the seeded synthetic dataset instead of CIFAR-10");
    data->excludes(synth);
    if (with_train) {
      cmd.add_option("--synthetic-train", synthetic_train, "Synthetic training set size")->capture_default_str();
      cmd.add_option("--train-limit", train_limit, "Use only the first N training images (0 = all)");
    }
    cmd.add_option("--synthetic-test", synthetic_test, "Synthetic test set size")->capture_default_str();
    cmd.add_option("--test-limit", test_limit, "Use only the first N test images (0 = all)");
  }

  bool given() const { return synthetic || !dir.empty(); }

  // Synthetic training data uses `seed`, held-out data seed + 1, so eval
  // and train commands given the same --seed agree on the split.
  std::pair<Dataset, Dataset> load(const ModelConfig& cfg) const {
    if (synthetic) {
      return {make_synthetic(synthetic_train, cfg.num_classes, seed, cfg.image_h, cfg.image_w, cfg.channels),
              make_synthetic(synthetic_test, cfg.num_classes, seed + 1, cfg.image_h, cfg.image_w, cfg.channels)};
    }
    if (dir.empty()) throw UsageError("one of --data or --synthetic is required");
    return load_cifar10(dir, train_limit, test_limit);
  }

  Dataset load_test(const ModelConfig& cfg) const { return load(cfg).second.head(test_limit); }
};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  f << text;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Vision transformer compression: VTP pruning, low-rank attention, reports", "vitc"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a baseline, masked, low-rank or hybrid model");
  std::string config_path, out_path, lra_name = "none", masks_name = "none", log_csv;
  std::optional<std::size_t> epochs, rank, batch;
  std::optional<std::uint64_t> seed;
  std::optional<float> lambda, lr;
  bool no_timing = false;
  DataOptions train_data;
  train_cmd->add_option("--config", config_path, "key = value file with model/train/prune settings");
  train_data.add_to(*train_cmd, true);
  train_cmd->add_option("--epochs", epochs, "Training epochs");
  train_cmd->add_option("--seed", seed, "Seed for initialization, shuffling, dropout and synthetic data");
  train_cmd->add_option("--lambda", lambda, "L1 weight on mask values");
  train_cmd->add_option("--lr", lr, "Adam learning rate");
  train_cmd->add_option("--batch-size", batch, "Minibatch size");
  train_cmd->add_option("--lra", lra_name, "Low-rank attention variant")
      ->check(CLI::IsMember({"none", "dxk", "kxk"}));
  train_cmd->add_option("--rank", rank, "Low-rank width k");
  train_cmd->add_option("--masks", masks_name, "Mask placement")
      ->check(CLI::IsMember({"none", "full", "ffn", "attention"}));
  train_cmd->add_option("--out", out_path, "Checkpoint to write")->required();
  train_cmd->add_option("--log-csv", log_csv, "Write the per-epoch log as CSV");
  train_cmd->add_flag("--no-timing", no_timing, "Leave the seconds column of the CSV empty");

  // prune
  auto* prune_cmd = app.add_subcommand("prune", "Threshold, binarize and compact a masked checkpoint");
  std::string prune_in, prune_out;
  double rate = 0.0;
  prune_cmd->add_option("--ckpt", prune_in, "Masked checkpoint")->required();
  prune_cmd->add_option("--rate", rate, "Prune rate alpha in [0, 1)")->required();
  prune_cmd->add_option("--out", prune_out, "Compacted checkpoint to write")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Test accuracy and parameter count of a checkpoint");
  std::string eval_ckpt;
  DataOptions eval_data;
  eval_cmd->add_option("--ckpt", eval_ckpt, "Checkpoint")->required();
  eval_data.add_to(*eval_cmd, false);
  eval_cmd->add_option("--seed", eval_data.seed, "Synthetic data seed (held-out split uses seed + 1)");

  // report
  auto* report_cmd = app.add_subcommand("report", "Compression table for a base checkpoint and variants");
  std::string report_base, report_csv;
  std::vector<std::string> variants;
  DataOptions report_data;
  report_cmd->add_option("--base", report_base, "Reference checkpoint")->required();
  report_cmd->add_option("--variants", variants, "Compressed checkpoints")->required();
  report_data.add_to(*report_cmd, false);
  report_cmd->add_option("--seed", report_data.seed, "Synthetic data seed (held-out split uses seed + 1)");
  report_cmd->add_option("--csv", report_csv, "Also write the table as CSV");

  // export-masks
  auto* export_cmd = app.add_subcommand("export-masks", "Mask value histograms and summary statistics");
  std::string export_ckpt, export_dir;
  std::size_t bins = 20;
  export_cmd->add_option("--ckpt", export_ckpt, "Masked checkpoint")->required();
  export_cmd->add_option("--bins", bins, "Histogram bins")->check(CLI::PositiveNumber)->capture_default_str();
  export_cmd->add_option("--out", export_dir, "Output directory")->required();

  // experiment
  auto* exp_cmd = app.add_subcommand("experiment", "Train and compare one compression family end to end");
  std::string exp_kind = "vtp", exp_csv, exp_config;
  std::vector<double> exp_rates;
  std::string exp_lra = "dxk";
  std::size_t exp_rank = 0;
  std::optional<std::size_t> exp_epochs;
  DataOptions exp_data;
  exp_cmd->add_option("--kind", exp_kind, "Experiment family")
      ->check(CLI::IsMember({"baseline", "vtp", "lra", "hybrid"}));
  exp_cmd->add_option("--config", exp_config, "key = value settings file");
  exp_cmd->add_option("--rates", exp_rates, "Prune rates for vtp and hybrid")->delimiter(',');
  exp_cmd->add_option("--lra", exp_lra, "Low-rank variant")->check(CLI::IsMember({"dxk", "kxk"}));
  exp_cmd->add_option("--rank", exp_rank, "Low-rank width k (default d/4)");
  exp_cmd->add_option("--epochs", exp_epochs, "Training epochs");
  exp_cmd->add_option("--seed", exp_data.seed, "Seed");
  exp_data.add_to(*exp_cmd, true);
  exp_cmd->add_option("--csv", exp_csv, "Also write the table as CSV");

  std::vector<std::string> argv_tail(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(argv_tail.begin(), argv_tail.end());
  try {
    app.parse(argv_tail);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    const bool unknown_command =
        app.get_subcommands().empty() && (dynamic_cast<const CLI::ExtrasError*>(&e) != nullptr ||
                                          dynamic_cast<const CLI::RequiredError*>(&e) != nullptr);
    err << (unknown_command ? "UNKNOWN_SUBCOMMAND: " : "BAD_FLAG: ") << e.what() << "\n";
    err << "run 'vitc --help' for usage\n";
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) {
      RunConfig rc;
      if (!config_path.empty()) rc = load_run_config(config_path);
      if (epochs) rc.train.epochs = *epochs;
      if (seed) rc.train.seed = *seed;
      if (lambda) {
        rc.train.lambda = *lambda;
        rc.prune.lambda = *lambda;
      }
      if (lr) rc.train.lr = *lr;
      if (batch) rc.train.batch_size = *batch;
      if (train_cmd->count("--lra")) rc.model.lra.variant = parse_lra_variant(lra_name);
      if (rank) rc.model.lra.rank = *rank;
      if (train_cmd->count("--masks")) rc.prune.placement = parse_mask_placement(masks_name);
      if (train_data.train_limit) rc.train.train_limit = train_data.train_limit;
      if (train_data.test_limit) rc.train.test_limit = train_data.test_limit;
      if (rc.model.lra.enabled() && rc.model.lra.rank == 0) throw UsageError("--rank is required with --lra");
      if (!train_data.given()) throw UsageError("one of --data or --synthetic is required");
      train_data.seed = rc.train.seed;
      rc.model.validate();
      rc.train.validate();

      VitModel model = rc.model.lra.enabled() ? VitModel::create(build_lra_attention(rc.model, rc.model.lra),
                                                                 rc.train.seed)
                                              : VitModel::create(rc.model, rc.train.seed);
      if (rc.prune.placement != MaskPlacement::None) attach_masks(model, rc.prune.placement);
      const auto [train_set, test_set] = train_data.load(model.config);
      err << "training " << count_parameters(model) << " parameters on " << train_set.head(rc.train.train_limit).size()
          << " images\n";
      const auto log = train(model, train_set, test_set, rc.train,
                             [&](const EpochLog& e) { out << format_epoch_line(e) << "\n" << std::flush; });
      save_checkpoint(model, out_path);
      if (!log_csv.empty()) {
        std::ofstream f(log_csv, std::ios::binary | std::ios::trunc);
        if (!f) throw Error(ErrorCode::Io, "cannot write " + log_csv);
        write_epoch_csv(f, log, !no_timing);
      }
      out << "params " << count_parameters(model) << "\n";
      out << "saved " << out_path << "\n";
      return kExitOk;
    }

    if (prune_cmd->parsed()) {
      if (!(rate >= 0.0 && rate < 1.0)) throw UsageError("--rate must lie in [0, 1), got " + fmt("%g", rate));
      const VitModel model = load_checkpoint(prune_in);
      const VitModel pruned = prune(model, rate);
      save_checkpoint(pruned, prune_out);
      out << "params_before " << count_parameters(model) << "\n";
      out << "params_after " << count_parameters(pruned) << "\n";
      out << "compression " << fmt("%.2f%%", compression_percent(static_cast<double>(count_parameters(model)),
                                                                    static_cast<double>(count_parameters(pruned))))
          << "\n";
      out << "saved " << prune_out << "\n";
      return kExitOk;
    }

    if (eval_cmd->parsed()) {
      const VitModel model = load_checkpoint(eval_ckpt);
      if (!eval_data.given()) throw UsageError("one of --data or --synthetic is required");
      const Dataset test = eval_data.load_test(model.config);
      out << "accuracy " << fmt("%.2f", evaluate(model, test)) << "\n";
      out << "params " << count_parameters(model) << "\n";
      out << "size_mib " << fmt("%.2f", model_size_mib(count_parameters(model))) << "\n";
      return kExitOk;
    }

    if (report_cmd->parsed()) {
      if (!report_data.given()) throw UsageError("one of --data or --synthetic is required");
      const VitModel base = load_checkpoint(report_base);
      const Dataset test = report_data.load_test(base.config);
      CompressionReport rep;
      rep.set_base(fs::path(report_base).stem().string(), evaluate(base, test), count_parameters(base));
      for (const std::string& v : variants) {
        const VitModel m = load_checkpoint(v);
        rep.add(fs::path(v).stem().string(), evaluate(m, test), count_parameters(m));
      }
      out << rep.to_text();
      if (!report_csv.empty()) write_text(report_csv, rep.to_csv());
      return kExitOk;
    }

    if (export_cmd->parsed()) {
      const VitModel model = load_checkpoint(export_ckpt);
      const MaskStatistics s = export_mask_histogram(collect_masks(model), bins, export_dir);
      out << "attention_values " << s.attention.size() << "\n";
      out << "ffn_values " << s.ffn.size() << "\n";
      out << "attention_mean " << fmt("%.4f", s.attention_mean) << "\n";
      out << "ffn_mean " << fmt("%.4f", s.ffn_mean) << "\n";
      out << "attention_above_0.8 " << fmt("%.4f", s.attention_above_08) << "\n";
      out << "wrote " << export_dir << "\n";
      return kExitOk;
    }

    if (exp_cmd->parsed()) {
      RunConfig rc;
      if (!exp_config.empty()) rc = load_run_config(exp_config);
      if (exp_epochs) rc.train.epochs = *exp_epochs;
      if (exp_cmd->count("--seed")) rc.train.seed = exp_data.seed;
      if (exp_data.train_limit) rc.train.train_limit = exp_data.train_limit;
      if (exp_data.test_limit) rc.train.test_limit = exp_data.test_limit;
      if (!exp_data.given()) throw UsageError("one of --data or --synthetic is required");
      exp_data.seed = rc.train.seed;
      ExperimentSpec spec;
      spec.kind = parse_experiment_kind(exp_kind);
      spec.model = rc.model;
      spec.model.lra = {};
      spec.train = rc.train;
      spec.rates = exp_rates;
      spec.placement = rc.prune.placement == MaskPlacement::None ? MaskPlacement::Full : rc.prune.placement;
      spec.lra = {parse_lra_variant(exp_lra), exp_rank ? exp_rank : rc.model.embed_dim / 4};
      if ((spec.kind == ExperimentKind::Vtp || spec.kind == ExperimentKind::Hybrid) && spec.rates.empty()) {
        throw UsageError("--rates is required for vtp and hybrid experiments");
      }
      for (double r : spec.rates)
        if (!(r >= 0.0 && r < 1.0)) throw UsageError("prune rates must lie in [0, 1)");
      const auto [train_set, test_set] = exp_data.load(spec.model);
      const ExperimentResult result = run_experiment(spec, train_set, test_set);
      out << result.report.to_text();
      out << "training_runs " << result.training_runs << "\n";
      if (!exp_csv.empty()) write_text(exp_csv, result.report.to_csv());
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "BAD_FLAG: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << e.what() << "\n";
    return e.code() == ErrorCode::InvalidRate ? kExitUsage : kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace vitc::cli
