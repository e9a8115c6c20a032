#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "vitc/model.hpp"

namespace vitc {

inline constexpr char kCheckpointMagic[4] = {'V', 'T', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout, all integers little-endian:
//   "VTCK" | u32 version | u64 json length | json config (UTF-8)
//   then until EOF: u32 name length | name | u32 rank | u64 dims[rank] |
//                   f32 payload (little-endian IEEE-754)
// The JSON carries the architecture, LRA settings, per-block mask presence
// and kept-dimension lists, so compacted models reload with reduced shapes.
// Masks are stored as raw (pre-binarization) values.
void save_checkpoint(const VitModel& model, const std::filesystem::path& path);

// Throws BadMagic, VersionMismatch, ShapeMismatch, MissingFile or Io.
VitModel load_checkpoint(const std::filesystem::path& path);

std::string checkpoint_config_json(const VitModel& model);

}  // namespace vitc
