#pragma once

#include "moelens/model.hpp"
#include "moelens/partition.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace moelens {

/// round(0.1 * n_layers * n_experts), at least 1.
int default_top_k(int n_layers, int n_experts);

struct ProfileConfig {
  int top_k = 0;  // 0 selects default_top_k
  int max_tokens_per_sample = 200;
  int max_samples = 10000;
  std::string language_tag = "und";
  std::string model_id = "model";
  int workers = 1;
};

/// Expert activation counts for one (model, language) pair.
struct FrequencyMatrix {
  CountMatrix counts;  // n_layers x n_experts
  std::int64_t total_tokens = 0;
  int top_k = 0;
  std::string language_tag;
  std::string model_id;
  std::string partition_id;  // ExpertPartition::fingerprint of the split used

  int n_layers() const { return static_cast<int>(counts.rows()); }
  int n_experts() const { return static_cast<int>(counts.cols()); }

  /// counts / total_tokens (all zeros when no tokens were profiled).
  MatrixD frequencies() const;

  /// Checks count conservation (sum = top_k * total_tokens) and bounds.
  void validate() const;

  /// "<model>:<lang>", used as mask provenance.
  std::string id() const { return model_id + ":" + language_tag; }

  static FrequencyMatrix empty(int n_layers, int n_experts, int top_k, std::string language_tag,
                               std::string model_id, std::string partition_id = {});

  bool operator==(const FrequencyMatrix&) const = default;
};

/// Signed per-expert sums of one token's taps: taps is n_layers x d_ff
/// (row l = the token's hidden FFN vector in layer l).
MatrixD score_experts(const MatrixF& taps, const ExpertPartition& partition);

/// Row-wise z-score with population standard deviation. A row with zero
/// variance maps to all zeros.
MatrixD zscore_per_layer(const MatrixD& scores);

/// The k (layer, expert) cells with the highest value, in rank order. Ties
/// go to the lower layer, then the lower expert.
std::vector<std::pair<int, int>> select_top_k(const MatrixD& z, int k);

/// Profiles tokenized samples: one forward pass per sample (truncated to
/// max_tokens_per_sample), and for every position the top-k experts after
/// per-layer z-scoring get one count. total_tokens counts every position fed
/// to the model, BOS included.
FrequencyMatrix profile_corpus(const ModelBundle& model, const ExpertPartition& partition,
                               std::span<const std::vector<TokenId>> samples, const ProfileConfig& config);

/// Adds counts and token totals. Throws DataError on differing dims,
/// top_k, model id, language or partition.
FrequencyMatrix merge(const FrequencyMatrix& a, const FrequencyMatrix& b);

std::string frequency_to_text(const FrequencyMatrix& freq);
FrequencyMatrix frequency_from_text(const std::string& text);
FrequencyMatrix load_frequency(const std::filesystem::path& path);
void save_frequency(const FrequencyMatrix& freq, const std::filesystem::path& path);

}  // namespace moelens
