#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "vitc/model.hpp"
#include "vitc/trainer.hpp"
#include "vitc/vtp.hpp"

namespace vitc {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  PruneConfig prune;
};

// One `key = value` per line; '#' starts a comment. Keys are the field
// names of ModelConfig, TrainConfig and PruneConfig, plus `lra` (none, dxk,
// kxk) and `rank` for the low-rank settings. `head_hidden = none` removes
// the hidden head layer. Unknown keys and malformed values throw
// InvalidConfig with the line number.
RunConfig parse_run_config(std::string_view text, RunConfig defaults = {});
RunConfig load_run_config(const std::filesystem::path& path, RunConfig defaults = {});

// Applies one setting; throws InvalidConfig.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

std::string to_config_text(const RunConfig& config);

}  // namespace vitc
