#pragma once

#include "moelens/model.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace moelens {

/// Mean next-token cross-entropy of `tokens` (positions 0..n-2 predict
/// 1..n-1). When `grad` is non-null the gradient with respect to every
/// weight is added into it (same layout as `weights`).
template <typename Scalar>
Scalar loss_and_grad(const ModelConfig& config, const DecoderWeights<Scalar>& weights, std::span<const TokenId> tokens,
                     DecoderWeights<Scalar>* grad);

struct TrainConfig {
  int steps = 300;
  int batch_size = 8;
  int seq_len = 48;
  double learning_rate = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;
};

struct TrainReport {
  std::vector<double> losses;  // mean batch loss per step
};

/// Adam on random windows of `samples` (each at least two tokens).
/// Deterministic given the seed.
TrainReport train(ModelBundle& model, std::span<const std::vector<TokenId>> samples, const TrainConfig& config);

}  // namespace moelens
