#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include <json.hpp>

#include "tsarank/model.hpp"

namespace tsarank {

/// On-disk layout (all integers little-endian):
///
///   8 bytes   magic "TSRKCKPT"
///   u32       format version
///   u64       header length H
///   H bytes   UTF-8 JSON header: config, stage, metadata, parameter manifest
///   ...       float64 values of every parameter, manifest order
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const LmCheckpoint& model, const std::filesystem::path& path);

/// Loads and validates a checkpoint. When `expected` is given, the stored
/// config must equal it.
LmCheckpoint load_checkpoint(const std::filesystem::path& path, const std::optional<LmConfig>& expected = std::nullopt);

nlohmann::json to_json(const LmConfig& config);
LmConfig lm_config_from_json(const nlohmann::json& j);

}  // namespace tsarank
