#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace moelens {

struct ReproOptions {
  std::string fixture = "toy-bilingual";
  std::filesystem::path out_dir = "repro-out";
  std::uint64_t seed = 0;
  int workers = 1;
  int train_steps = 300;
};

struct ReproResult {
  std::vector<std::filesystem::path> artifacts;  // every file written, manifests included
  std::filesystem::path manifest;                // top-level manifest
};

/// End-to-end pipeline on a generated fixture: gen-toy (trained base and a
/// language-la fine-tuned variant) -> split -> profile -> analyze -> prune
/// -> eval -> render. Every output gets a manifest.
ReproResult run_repro(const ReproOptions& options);

}  // namespace moelens
