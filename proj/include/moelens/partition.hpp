#pragma once

#include "moelens/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace moelens {

/// Assignment of each FFN intermediate neuron to one of n_experts
/// equal-sized experts, per layer. The same assignment indexes the rows of
/// up_proj and gate_proj and the columns of down_proj.
struct ExpertPartition {
  int n_layers = 0;
  int d_ff = 0;
  int n_experts = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<int>> assignment;  // [layer][neuron] -> expert

  int expert_size() const { return d_ff / n_experts; }

  /// Throws DataError unless every layer assigns exactly d_ff / n_experts
  /// neurons to each expert.
  void validate() const;

  /// Neuron indices of `expert` in `layer`, ascending.
  std::vector<int> members(int layer, int expert) const;

  /// Short content digest (hex) of the assignment; frequency matrices record
  /// it so that diffs can check they share an expert split.
  std::string fingerprint() const;

  bool operator==(const ExpertPartition&) const = default;
};

std::string partition_to_json(const ExpertPartition& partition);
ExpertPartition partition_from_json(const std::string& text);
ExpertPartition load_partition(const std::filesystem::path& path);
void save_partition(const ExpertPartition& partition, const std::filesystem::path& path);

}  // namespace moelens
