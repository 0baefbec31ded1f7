#pragma once

#include "moelens/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace moelens {

/// Architecture constants of a Llama-style decoder.
struct ModelConfig {
  int n_layers = 1;
  int d_model = 8;
  int d_ff = 16;
  int n_heads = 1;
  int vocab_size = 259;
  int max_seq_len = 64;
  double rope_theta = 10000.0;
  double norm_eps = 1e-5;
  /// Output head shares storage with the token embedding (head = embedding^T).
  bool tied_head = false;

  int head_dim() const { return d_model / n_heads; }

  /// Throws DataError when a count is < 1, d_model is not divisible by
  /// n_heads, the head dimension is odd (rotary pairs), or a real is not
  /// positive.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

template <typename Scalar>
struct LayerWeights {
  Vector<Scalar> attn_norm;   // d_model
  Matrix<Scalar> wq, wk, wv;  // d_model x d_model, y = W x
  Matrix<Scalar> wo;          // d_model x d_model
  Vector<Scalar> ffn_norm;    // d_model
  Matrix<Scalar> up_proj;     // d_ff x d_model
  Matrix<Scalar> gate_proj;   // d_ff x d_model
  Matrix<Scalar> down_proj;   // d_model x d_ff
};

template <typename Scalar>
struct DecoderWeights {
  Matrix<Scalar> token_embedding;  // vocab x d_model
  std::vector<LayerWeights<Scalar>> layers;
  Vector<Scalar> final_norm;   // d_model
  Matrix<Scalar> output_head;  // d_model x vocab; 0x0 when the head is tied

  static DecoderWeights zeros(const ModelConfig& config);

  template <typename To>
  DecoderWeights<To> cast() const {
    DecoderWeights<To> out;
    out.token_embedding = token_embedding.template cast<To>();
    out.layers.reserve(layers.size());
    for (const auto& l : layers) {
      out.layers.push_back({l.attn_norm.template cast<To>(), l.wq.template cast<To>(),
                            l.wk.template cast<To>(), l.wv.template cast<To>(),
                            l.wo.template cast<To>(), l.ffn_norm.template cast<To>(),
                            l.up_proj.template cast<To>(), l.gate_proj.template cast<To>(),
                            l.down_proj.template cast<To>()});
    }
    out.final_norm = final_norm.template cast<To>();
    out.output_head = output_head.template cast<To>();
    return out;
  }
};

/// Named, shaped view of one weight tensor in canonical container order.
template <typename Scalar>
struct TensorRef {
  std::string name;
  std::vector<std::int64_t> dims;
  std::span<Scalar> data;
};

/// Every tensor of `weights` in container order: token_embedding, then per
/// layer attn_norm, wq, wk, wv, wo, ffn_norm, up_proj, gate_proj, down_proj,
/// then final_norm and (untied only) output_head.
template <typename Scalar>
std::vector<TensorRef<Scalar>> tensor_refs(DecoderWeights<Scalar>& weights);
template <typename Scalar>
std::vector<TensorRef<const Scalar>> tensor_refs(const DecoderWeights<Scalar>& weights);

/// Shapes the container must hold for `config`, in container order.
std::vector<std::pair<std::string, std::vector<std::int64_t>>> expected_tensors(
    const ModelConfig& config);

/// A validated dense model. Immutable after construction by convention;
/// all analysis code takes it by const reference.
struct ModelBundle {
  ModelConfig config;
  DecoderWeights<float> weights;

  /// Checks every tensor shape against the config and that all values are
  /// finite. Throws DataError naming the offending tensor.
  void validate() const;

  std::int64_t parameter_count() const;
};

}  // namespace moelens
