#include "moelens/manifest.hpp"

#include "moelens/io.hpp"

namespace moelens {

namespace {

std::string display(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (base.empty()) return p.generic_string();
  return std::filesystem::relative(p, base).generic_string();
}

}  // namespace

std::string RunManifest::to_json(const std::filesystem::path& base) const {
  nlohmann::ordered_json j;
  j["tool"] = kToolName;
  j["version"] = kToolVersion;
  j["command"] = command;
  j["config"] = config;
  j["config_hash"] = sha256_hex(config.dump());
  j["seeds"] = seeds;
  auto digests = [&](const std::vector<std::filesystem::path>& files) {
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (const auto& f : files) out.push_back({{"path", display(f, base)}, {"sha256", sha256_file(f)}});
    return out;
  };
  j["inputs"] = digests(inputs);
  j["outputs"] = digests(outputs);
  return j.dump(2) + "\n";
}

std::filesystem::path manifest_path_for(const std::filesystem::path& output) {
  auto p = output;
  p += ".manifest.json";
  return p;
}

std::filesystem::path write_manifest(const RunManifest& manifest, const std::filesystem::path& anchor) {
  const auto path = manifest_path_for(anchor);
  write_text_file(path, manifest.to_json(path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path()));
  return path;
}

}  // namespace moelens
