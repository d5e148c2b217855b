#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "prodigy/model.hpp"

namespace prodigy {

inline constexpr std::string_view kCheckpointMagic = "PRDGCK01";
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Model parameters plus whatever training state rides along with them.
struct CheckpointData {
  ModelParams params;
  /// Additional named tensor groups, e.g. optimizer moments.
  std::map<std::string, TensorStore> groups;
  /// Free-form metadata (training config, seed, step, rng state, telemetry).
  nlohmann::json meta = nlohmann::json::object();
};

/// Checksummed, written atomically (temporary file then rename).
void save_checkpoint(const CheckpointData& ck, const std::filesystem::path& path);
/// Throws LoadError on version mismatch, truncation, corruption or inconsistent shapes.
CheckpointData load_checkpoint(const std::filesystem::path& path);

}  // namespace prodigy
