#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace moelens {

inline constexpr char kToolName[] = "moe-lens";
inline constexpr char kToolVersion[] = "0.1.0";

/// Provenance written beside every output file as "<output>.manifest.json".
/// Contains no timestamps or host details, so replaying the same command
/// on the same inputs reproduces it byte for byte.
struct RunManifest {
  std::vector<std::string> command;
  nlohmann::ordered_json config;  // resolved options; hashed into config_hash
  std::map<std::string, std::uint64_t> seeds;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;

  /// Input/output paths are recorded relative to `base` when given.
  std::string to_json(const std::filesystem::path& base = {}) const;
};

std::filesystem::path manifest_path_for(const std::filesystem::path& output);

/// Writes the manifest next to `anchor` (usually the first output).
std::filesystem::path write_manifest(const RunManifest& manifest, const std::filesystem::path& anchor);

}  // namespace moelens
