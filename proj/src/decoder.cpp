#include "moelens/decoder.hpp"

#include "moelens/kernels.hpp"

#include <string>

namespace moelens {

namespace {

void check_tokens(const ModelConfig& c, std::span<const TokenId> tokens) {
  if (static_cast<int>(tokens.size()) > c.max_seq_len)
    throw DataError("sequence length " + std::to_string(tokens.size()) + " exceeds max_seq_len " +
                    std::to_string(c.max_seq_len));
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || tokens[i] >= c.vocab_size)
      throw DataError("token id " + std::to_string(tokens[i]) + " at position " + std::to_string(i) +
                      " out of range for vocab " + std::to_string(c.vocab_size));
  }
}

/// Shared decoder loop. `ffn(layer, normed_input)` returns the FFN output
/// for that layer.
template <typename Ffn>
MatrixF run_decoder(const ModelBundle& model, std::span<const TokenId> tokens, Ffn&& ffn) {
  const ModelConfig& c = model.config;
  check_tokens(c, tokens);
  const auto& w = model.weights;
  const Eigen::Index seq = static_cast<Eigen::Index>(tokens.size());
  if (seq == 0) return MatrixF(0, c.vocab_size);

  MatrixF x(seq, c.d_model);
  for (Eigen::Index t = 0; t < seq; ++t) x.row(t) = w.token_embedding.row(tokens[t]);

  const kernels::RopeTable<float> rope(seq, c.head_dim(), c.rope_theta);
  for (int l = 0; l < c.n_layers; ++l) {
    const auto& lw = w.layers[l];
    const MatrixF a = kernels::rms_norm(x, lw.attn_norm, c.norm_eps);
    MatrixF q = a * lw.wq.transpose();
    MatrixF k = a * lw.wk.transpose();
    const MatrixF v = a * lw.wv.transpose();
    kernels::apply_rope(q, c.n_heads, rope);
    kernels::apply_rope(k, c.n_heads, rope);
    const MatrixF attn = kernels::causal_attention(q, k, v, c.n_heads);
    x.noalias() += attn * lw.wo.transpose();

    const MatrixF b = kernels::rms_norm(x, lw.ffn_norm, c.norm_eps);
    x.noalias() += ffn(l, b);
  }
  const MatrixF f = kernels::rms_norm(x, w.final_norm, c.norm_eps);
  return kernels::project_vocab(f, w.output_head, w.token_embedding);
}

MatrixF gated_hidden(const MatrixF& b, const MatrixF& up, const MatrixF& gate) {
  MatrixF g = b * gate.transpose();
  const MatrixF u = b * up.transpose();
  g = g.unaryExpr([](float z) { return kernels::silu(z); });
  return g.cwiseProduct(u);
}

void emit(const ActivationSink& sink, int layer, const MatrixF& hidden) {
  if (!sink) return;
  for (Eigen::Index t = 0; t < hidden.rows(); ++t) {
    sink(ActivationTap{layer, static_cast<int>(t),
                       std::span<const float>(hidden.row(t).data(), static_cast<size_t>(hidden.cols()))});
  }
}

/// Dropped neuron indices per layer.
std::vector<std::vector<int>> dropped_neurons(const ExpertPartition& partition, const PruneMask& mask) {
  std::vector<std::vector<int>> dropped(partition.n_layers);
  for (int l = 0; l < partition.n_layers; ++l) {
    const auto& assign = partition.assignment[l];
    for (int i = 0; i < partition.d_ff; ++i) {
      if (!mask.keep(l, assign[i])) dropped[l].push_back(i);
    }
  }
  return dropped;
}

}  // namespace

void check_mask_shape(const ModelConfig& config, const ExpertPartition& partition, const PruneMask& mask) {
  partition.validate();
  if (partition.n_layers != config.n_layers || partition.d_ff != config.d_ff)
    throw DataError("partition (" + std::to_string(partition.n_layers) + " layers, d_ff " +
                    std::to_string(partition.d_ff) + ") does not match model (" + std::to_string(config.n_layers) +
                    " layers, d_ff " + std::to_string(config.d_ff) + ")");
  if (mask.n_layers() != partition.n_layers || mask.n_experts() != partition.n_experts)
    throw DataError("mask shape " + std::to_string(mask.n_layers()) + "x" + std::to_string(mask.n_experts()) +
                    " does not match partition " + std::to_string(partition.n_layers) + "x" +
                    std::to_string(partition.n_experts));
}

MatrixF forward(const ModelBundle& model, std::span<const TokenId> tokens, const ActivationSink& sink) {
  return run_decoder(model, tokens, [&](int l, const MatrixF& b) -> MatrixF {
    const auto& lw = model.weights.layers[l];
    const MatrixF h = gated_hidden(b, lw.up_proj, lw.gate_proj);
    emit(sink, l, h);
    return h * lw.down_proj.transpose();
  });
}

MatrixF forward_masked(const ModelBundle& model, std::span<const TokenId> tokens, const ExpertPartition& partition,
                       const PruneMask& mask, const ActivationSink& sink) {
  check_mask_shape(model.config, partition, mask);
  const auto dropped = dropped_neurons(partition, mask);
  return run_decoder(model, tokens, [&](int l, const MatrixF& b) -> MatrixF {
    const auto& lw = model.weights.layers[l];
    MatrixF h = gated_hidden(b, lw.up_proj, lw.gate_proj);
    for (int i : dropped[l]) h.col(i).setZero();
    emit(sink, l, h);
    return h * lw.down_proj.transpose();
  });
}

std::int64_t CompactedModel::ffn_parameter_count() const {
  std::int64_t n = 0;
  for (const auto& l : layers) n += l.up_proj.size() + l.gate_proj.size() + l.down_proj.size();
  return n;
}

CompactedModel compact(const ModelBundle& model, const ExpertPartition& partition, const PruneMask& mask) {
  check_mask_shape(model.config, partition, mask);
  CompactedModel out;
  out.dense = &model;
  out.layers.resize(model.config.n_layers);
  for (int l = 0; l < model.config.n_layers; ++l) {
    const auto& lw = model.weights.layers[l];
    auto& cl = out.layers[l];
    for (int i = 0; i < partition.d_ff; ++i) {
      if (mask.keep(l, partition.assignment[l][i])) cl.neurons.push_back(i);
    }
    const Eigen::Index kept = static_cast<Eigen::Index>(cl.neurons.size());
    cl.up_proj.resize(kept, model.config.d_model);
    cl.gate_proj.resize(kept, model.config.d_model);
    cl.down_proj.resize(model.config.d_model, kept);
    for (Eigen::Index j = 0; j < kept; ++j) {
      const int i = cl.neurons[j];
      cl.up_proj.row(j) = lw.up_proj.row(i);
      cl.gate_proj.row(j) = lw.gate_proj.row(i);
      cl.down_proj.col(j) = lw.down_proj.col(i);
    }
  }
  return out;
}

MatrixF forward_compacted(const CompactedModel& model, std::span<const TokenId> tokens) {
  if (!model.dense) throw DataError("compacted model has no dense base");
  return run_decoder(*model.dense, tokens, [&](int l, const MatrixF& b) -> MatrixF {
    const auto& cl = model.layers[l];
    if (cl.neurons.empty()) return MatrixF::Zero(b.rows(), b.cols());
    const MatrixF h = gated_hidden(b, cl.up_proj, cl.gate_proj);
    return h * cl.down_proj.transpose();
  });
}

}  // namespace moelens
