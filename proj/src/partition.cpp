#include "moelens/partition.hpp"

#include "moelens/io.hpp"

#include <json.hpp>

namespace moelens {

void ExpertPartition::validate() const {
  if (n_layers < 1 || d_ff < 1 || n_experts < 1) throw DataError("partition: counts must be >= 1");
  if (d_ff % n_experts != 0)
    throw DataError("partition: d_ff " + std::to_string(d_ff) + " not divisible by n_experts " +
                    std::to_string(n_experts));
  if (static_cast<int>(assignment.size()) != n_layers)
    throw DataError("partition: expected " + std::to_string(n_layers) + " assignment vectors, got " +
                    std::to_string(assignment.size()));
  const int size = expert_size();
  for (int l = 0; l < n_layers; ++l) {
    if (static_cast<int>(assignment[l].size()) != d_ff)
      throw DataError("partition: layer " + std::to_string(l) + " assigns " + std::to_string(assignment[l].size()) +
                      " neurons, expected " + std::to_string(d_ff));
    std::vector<int> count(n_experts, 0);
    for (int e : assignment[l]) {
      if (e < 0 || e >= n_experts)
        throw DataError("partition: layer " + std::to_string(l) + " has expert index " + std::to_string(e) +
                        " out of range");
      ++count[e];
    }
    for (int e = 0; e < n_experts; ++e) {
      if (count[e] != size)
        throw DataError("partition: layer " + std::to_string(l) + " expert " + std::to_string(e) + " has " +
                        std::to_string(count[e]) + " neurons, expected " + std::to_string(size));
    }
  }
}

std::vector<int> ExpertPartition::members(int layer, int expert) const {
  std::vector<int> out;
  out.reserve(expert_size());
  const auto& a = assignment.at(layer);
  for (int i = 0; i < d_ff; ++i) {
    if (a[i] == expert) out.push_back(i);
  }
  return out;
}

std::string ExpertPartition::fingerprint() const {
  return sha256_hex(nlohmann::json(assignment).dump()).substr(0, 16);
}

std::string partition_to_json(const ExpertPartition& p) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["n_layers"] = p.n_layers;
  j["d_ff"] = p.d_ff;
  j["n_experts"] = p.n_experts;
  j["seed"] = p.seed;
  j["assignment"] = p.assignment;
  return j.dump() + "\n";
}

ExpertPartition partition_from_json(const std::string& text) {
  ExpertPartition p;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("version").get<int>() != 1) throw DataError("partition: unsupported version");
    p.n_layers = j.at("n_layers").get<int>();
    p.d_ff = j.at("d_ff").get<int>();
    p.n_experts = j.at("n_experts").get<int>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.assignment = j.at("assignment").get<std::vector<std::vector<int>>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed partition file: ") + e.what());
  }
  p.validate();
  return p;
}

ExpertPartition load_partition(const std::filesystem::path& path) {
  return partition_from_json(read_text_file(path));
}

void save_partition(const ExpertPartition& partition, const std::filesystem::path& path) {
  partition.validate();
  write_text_file(path, partition_to_json(partition));
}

}  // namespace moelens
