#include "moelens/model.hpp"

#include <cmath>
#include <string>

namespace moelens {

void ModelConfig::validate() const {
  auto require_count = [](int v, const char* name) {
    if (v < 1) throw DataError(std::string("config: ") + name + " must be >= 1");
  };
  require_count(n_layers, "n_layers");
  require_count(d_model, "d_model");
  require_count(d_ff, "d_ff");
  require_count(n_heads, "n_heads");
  require_count(vocab_size, "vocab_size");
  require_count(max_seq_len, "max_seq_len");
  if (d_model % n_heads != 0) throw DataError("config: d_model must be divisible by n_heads");
  if (head_dim() % 2 != 0) throw DataError("config: head dimension must be even for rotary encoding");
  if (!(rope_theta > 0.0) || !std::isfinite(rope_theta))
    throw DataError("config: rope_theta must be a positive real");
  if (!(norm_eps > 0.0) || !std::isfinite(norm_eps))
    throw DataError("config: norm_eps must be a positive real");
}

template <typename Scalar>
DecoderWeights<Scalar> DecoderWeights<Scalar>::zeros(const ModelConfig& c) {
  DecoderWeights w;
  w.token_embedding = Matrix<Scalar>::Zero(c.vocab_size, c.d_model);
  w.layers.resize(c.n_layers);
  for (auto& l : w.layers) {
    l.attn_norm = Vector<Scalar>::Zero(c.d_model);
    l.wq = Matrix<Scalar>::Zero(c.d_model, c.d_model);
    l.wk = Matrix<Scalar>::Zero(c.d_model, c.d_model);
    l.wv = Matrix<Scalar>::Zero(c.d_model, c.d_model);
    l.wo = Matrix<Scalar>::Zero(c.d_model, c.d_model);
    l.ffn_norm = Vector<Scalar>::Zero(c.d_model);
    l.up_proj = Matrix<Scalar>::Zero(c.d_ff, c.d_model);
    l.gate_proj = Matrix<Scalar>::Zero(c.d_ff, c.d_model);
    l.down_proj = Matrix<Scalar>::Zero(c.d_model, c.d_ff);
  }
  w.final_norm = Vector<Scalar>::Zero(c.d_model);
  if (!c.tied_head) w.output_head = Matrix<Scalar>::Zero(c.d_model, c.vocab_size);
  return w;
}

namespace {

template <typename Out, typename W>
std::vector<TensorRef<Out>> collect(W& w) {
  std::vector<TensorRef<Out>> refs;
  auto add_matrix = [&](std::string name, auto& m) {
    refs.push_back({std::move(name), {m.rows(), m.cols()}, {m.data(), static_cast<size_t>(m.size())}});
  };
  auto add_vector = [&](std::string name, auto& v) {
    refs.push_back({std::move(name), {v.size()}, {v.data(), static_cast<size_t>(v.size())}});
  };
  add_matrix("token_embedding", w.token_embedding);
  for (size_t i = 0; i < w.layers.size(); ++i) {
    auto& l = w.layers[i];
    const std::string p = "layer" + std::to_string(i) + ".";
    add_vector(p + "attn_norm", l.attn_norm);
    add_matrix(p + "wq", l.wq);
    add_matrix(p + "wk", l.wk);
    add_matrix(p + "wv", l.wv);
    add_matrix(p + "wo", l.wo);
    add_vector(p + "ffn_norm", l.ffn_norm);
    add_matrix(p + "up_proj", l.up_proj);
    add_matrix(p + "gate_proj", l.gate_proj);
    add_matrix(p + "down_proj", l.down_proj);
  }
  add_vector("final_norm", w.final_norm);
  if (w.output_head.size() > 0) add_matrix("output_head", w.output_head);
  return refs;
}

}  // namespace

template <typename Scalar>
std::vector<TensorRef<Scalar>> tensor_refs(DecoderWeights<Scalar>& weights) {
  return collect<Scalar>(weights);
}

template <typename Scalar>
std::vector<TensorRef<const Scalar>> tensor_refs(const DecoderWeights<Scalar>& weights) {
  return collect<const Scalar>(weights);
}

std::vector<std::pair<std::string, std::vector<std::int64_t>>> expected_tensors(const ModelConfig& c) {
  std::vector<std::pair<std::string, std::vector<std::int64_t>>> out;
  const std::int64_t d = c.d_model, f = c.d_ff, v = c.vocab_size;
  out.push_back({"token_embedding", {v, d}});
  for (int i = 0; i < c.n_layers; ++i) {
    const std::string p = "layer" + std::to_string(i) + ".";
    out.push_back({p + "attn_norm", {d}});
    out.push_back({p + "wq", {d, d}});
    out.push_back({p + "wk", {d, d}});
    out.push_back({p + "wv", {d, d}});
    out.push_back({p + "wo", {d, d}});
    out.push_back({p + "ffn_norm", {d}});
    out.push_back({p + "up_proj", {f, d}});
    out.push_back({p + "gate_proj", {f, d}});
    out.push_back({p + "down_proj", {d, f}});
  }
  out.push_back({"final_norm", {d}});
  if (!c.tied_head) out.push_back({"output_head", {d, v}});
  return out;
}

void ModelBundle::validate() const {
  config.validate();
  if (static_cast<int>(weights.layers.size()) != config.n_layers)
    throw DataError("model: layer count " + std::to_string(weights.layers.size()) +
                    " does not match config n_layers " + std::to_string(config.n_layers));
  const auto expected = expected_tensors(config);
  const auto actual = tensor_refs(weights);
  if (actual.size() != expected.size())
    throw DataError("model: tensor count mismatch (tied_head flag vs output_head presence)");
  for (size_t t = 0; t < expected.size(); ++t) {
    if (actual[t].name != expected[t].first || actual[t].dims != expected[t].second)
      throw DataError("model: tensor '" + expected[t].first + "' has wrong shape");
    const auto& data = actual[t].data;
    for (size_t i = 0; i < data.size(); ++i) {
      if (!std::isfinite(data[i]))
        throw DataError("model: tensor '" + actual[t].name + "' has non-finite value at element " +
                        std::to_string(i));
    }
  }
}

std::int64_t ModelBundle::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& t : tensor_refs(weights)) n += static_cast<std::int64_t>(t.data.size());
  return n;
}

template struct DecoderWeights<float>;
template struct DecoderWeights<double>;
template std::vector<TensorRef<float>> tensor_refs(DecoderWeights<float>&);
template std::vector<TensorRef<double>> tensor_refs(DecoderWeights<double>&);
template std::vector<TensorRef<const float>> tensor_refs(const DecoderWeights<float>&);
template std::vector<TensorRef<const double>> tensor_refs(const DecoderWeights<double>&);

}  // namespace moelens
