#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "dvd/diffusion.hpp"

namespace dvd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Container layout:
//   "DVDC" | version u32 LE | header length u64 LE | header JSON
//   | per parameter (header order): f32 data
//   | per parameter: Adam step i64, exp_avg f32 data, exp_avg_sq f32 data
// The header carries the run config, config hash, net config, schedule,
// trainer options, RNG state, update counter and parameter names/shapes.

struct CheckpointMeta {
  nlohmann::json run_config;  // resolved config snapshot
  std::string config_hash;
};

void save_checkpoint(const std::filesystem::path& path, Trainer& trainer, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  std::unique_ptr<Trainer> trainer;
  CheckpointMeta meta;
};

/// Throws FormatError naming the file and the stored/expected versions.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dvd
