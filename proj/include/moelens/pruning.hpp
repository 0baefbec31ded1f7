#pragma once

#include "moelens/mask.hpp"
#include "moelens/model.hpp"
#include "moelens/profiler.hpp"

#include <cstdint>

namespace moelens {

/// keep[l][e] <=> freq[l][e] >= tau (inclusive).
KeepMatrix keep_by_threshold(const MatrixD& freq, double tau);
PruneMask mask_by_threshold(const FrequencyMatrix& freq, double tau);

/// round-half-up(percent * n_experts / 100).
int top_percent_count(int n_experts, double percent);

/// Per layer, the top_percent_count experts by frequency; ties go to the
/// lower expert index.
KeepMatrix keep_by_top_percent(const MatrixD& freq, double percent);
PruneMask mask_by_top_percent(const FrequencyMatrix& freq, double percent);

/// Per layer, a uniform sample without replacement of as many experts as
/// `reference` keeps in that layer.
PruneMask mask_random_like(const PruneMask& reference, std::uint64_t seed);

/// Largest threshold whose inclusive mask keeps at least `proportion` of
/// all experts.
double tau_for_kept_proportion(const MatrixD& freq, double proportion);

struct FlopsEstimate {
  double dense_flops = 0;   // per token
  double pruned_flops = 0;  // per token
  double ffn_param_reduction = 0;
  double total_flops_reduction = 0;
};

/// Per token, multiply-accumulates counted as 2 FLOPs:
///   attention 8 d^2 + 4 seq d, FFN 6 d d_ff (scaled by the layer's kept
///   fraction), head 2 d vocab. Norms, softmax and rotary are ignored.
FlopsEstimate estimate_flops(const ModelConfig& config, const PruneMask& mask, int seq_len);

}  // namespace moelens
