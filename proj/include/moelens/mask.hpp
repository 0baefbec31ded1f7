#pragma once

#include "moelens/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace moelens {

/// How a keep-mask was derived.
struct MaskProvenance {
  enum class Kind { threshold, top_percent, random, full };
  Kind kind = Kind::full;
  double tau = 0.0;                  // threshold
  double percent = 100.0;            // top_percent
  std::uint64_t seed = 0;            // random
  std::vector<int> layer_counts;     // random: per-layer keep counts it matched

  std::string describe() const;
  bool operator==(const MaskProvenance&) const = default;
};

/// Per-layer expert keep matrix (n_layers x n_experts).
struct PruneMask {
  KeepMatrix keep;
  MaskProvenance provenance;
  std::string source;  // id of the frequency matrix (or mask) it came from

  int n_layers() const { return static_cast<int>(keep.rows()); }
  int n_experts() const { return static_cast<int>(keep.cols()); }
  std::int64_t kept_count() const { return keep.count(); }
  double kept_proportion() const {
    return keep.size() == 0 ? 0.0 : static_cast<double>(keep.count()) / static_cast<double>(keep.size());
  }
  std::vector<int> layer_keep_counts() const;

  static PruneMask all_keep(int n_layers, int n_experts);

  bool operator==(const PruneMask& o) const {
    return keep == o.keep && provenance == o.provenance && source == o.source;
  }
};

/// Row-major keep bits as hex: bit i is nibble i/4, weight 8 >> (i % 4);
/// the final nibble is zero padded.
std::string keep_bits_to_hex(const KeepMatrix& keep);
KeepMatrix keep_bits_from_hex(const std::string& hex, int rows, int cols);

std::string mask_to_json(const PruneMask& mask);
PruneMask mask_from_json(const std::string& text);
PruneMask load_mask(const std::filesystem::path& path);
void save_mask(const PruneMask& mask, const std::filesystem::path& path);

}  // namespace moelens
