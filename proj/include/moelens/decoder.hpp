#pragma once

#include "moelens/mask.hpp"
#include "moelens/model.hpp"
#include "moelens/partition.hpp"

#include <functional>
#include <span>
#include <vector>

namespace moelens {

/// Hidden FFN representation silu(gate x) * (up x) of one token in one
/// layer, i.e. the vector the down-projection consumes.
struct ActivationTap {
  int layer = 0;
  int token_position = 0;
  std::span<const float> values;  // length d_ff; valid only during the callback
};

/// Receives one tap per (layer, position), layers in ascending order and
/// positions ascending within a layer.
using ActivationSink = std::function<void(const ActivationTap&)>;

/// Logits (seq_len x vocab_size) of the dense model. Pure function of
/// (model, tokens). Throws DataError for an out-of-range token id or a
/// sequence longer than max_seq_len.
MatrixF forward(const ModelBundle& model, std::span<const TokenId> tokens, const ActivationSink& sink = {});

/// As forward, but neurons of experts with keep == false contribute zero to
/// every FFN. With an all-keep mask the result is bitwise identical to
/// forward. Taps report the masked hidden vector.
MatrixF forward_masked(const ModelBundle& model, std::span<const TokenId> tokens, const ExpertPartition& partition,
                       const PruneMask& mask, const ActivationSink& sink = {});

/// FFN weights with the dropped experts' rows (up, gate) and columns (down)
/// physically removed.
struct CompactFfnLayer {
  std::vector<int> neurons;  // kept neuron indices, ascending
  MatrixF up_proj;           // kept x d_model
  MatrixF gate_proj;         // kept x d_model
  MatrixF down_proj;         // d_model x kept
};

/// Shrunk model for the FFN-savings path. Non-FFN weights are borrowed from
/// `dense`, which must outlive this object.
struct CompactedModel {
  const ModelBundle* dense = nullptr;
  std::vector<CompactFfnLayer> layers;

  std::int64_t ffn_parameter_count() const;
};

CompactedModel compact(const ModelBundle& model, const ExpertPartition& partition, const PruneMask& mask);

/// Agrees with forward_masked up to float summation order.
MatrixF forward_compacted(const CompactedModel& model, std::span<const TokenId> tokens);

/// Throws DataError unless partition and mask fit the model.
void check_mask_shape(const ModelConfig& config, const ExpertPartition& partition, const PruneMask& mask);

}  // namespace moelens
