#include "moelens/train.hpp"

#include "moelens/kernels.hpp"
#include "moelens/rng.hpp"

#include <cmath>

namespace moelens {

namespace {

template <typename S>
struct LayerCache {
  Matrix<S> x_in, a, q, k, v, attn, x_mid, b, g, u, h;
  Vector<S> inv_a, inv_b;
  std::vector<Matrix<S>> probs;
};

/// dx (returned) and dweight (accumulated) of y = x * inv_rms * weight.
template <typename S>
Matrix<S> rms_norm_backward(const Matrix<S>& x, const Vector<S>& weight, const Vector<S>& inv_rms, const Matrix<S>& dy,
                            Vector<S>& dweight) {
  const S n = static_cast<S>(x.cols());
  Matrix<S> dx(x.rows(), x.cols());
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    const S r = inv_rms(t);
    dweight += (dy.row(t).cwiseProduct(x.row(t)) * r).transpose();
    const auto gw = dy.row(t).cwiseProduct(weight.transpose()).eval();
    const S dot = gw.dot(x.row(t));
    dx.row(t) = gw * r - x.row(t) * (r * r * r * dot / n);
  }
  return dx;
}

}  // namespace

template <typename S>
S loss_and_grad(const ModelConfig& c, const DecoderWeights<S>& w, std::span<const TokenId> tokens,
                DecoderWeights<S>* grad) {
  const Eigen::Index seq = static_cast<Eigen::Index>(tokens.size());
  if (seq < 2) throw DataError("loss_and_grad: need at least two tokens");
  if (seq > c.max_seq_len) throw DataError("loss_and_grad: sequence exceeds max_seq_len");
  for (TokenId t : tokens) {
    if (t < 0 || t >= c.vocab_size) throw DataError("loss_and_grad: token id out of range");
  }
  const int hd = c.head_dim();
  const S scale = S(1) / std::sqrt(static_cast<S>(hd));
  const kernels::RopeTable<S> rope(seq, hd, c.rope_theta);

  // Forward with caches.
  std::vector<LayerCache<S>> cache(c.n_layers);
  Matrix<S> x(seq, c.d_model);
  for (Eigen::Index t = 0; t < seq; ++t) x.row(t) = w.token_embedding.row(tokens[t]);
  for (int l = 0; l < c.n_layers; ++l) {
    const auto& lw = w.layers[l];
    auto& lc = cache[l];
    lc.x_in = x;
    lc.a = kernels::rms_norm(x, lw.attn_norm, c.norm_eps, &lc.inv_a);
    lc.q = lc.a * lw.wq.transpose();
    lc.k = lc.a * lw.wk.transpose();
    lc.v = lc.a * lw.wv.transpose();
    kernels::apply_rope(lc.q, c.n_heads, rope);
    kernels::apply_rope(lc.k, c.n_heads, rope);
    lc.attn = kernels::causal_attention(lc.q, lc.k, lc.v, c.n_heads, &lc.probs);
    x.noalias() += lc.attn * lw.wo.transpose();
    lc.x_mid = x;
    lc.b = kernels::rms_norm(x, lw.ffn_norm, c.norm_eps, &lc.inv_b);
    lc.g = lc.b * lw.gate_proj.transpose();
    lc.u = lc.b * lw.up_proj.transpose();
    lc.h = lc.g.unaryExpr([](S z) { return kernels::silu(z); }).cwiseProduct(lc.u);
    x.noalias() += lc.h * lw.down_proj.transpose();
  }
  Vector<S> inv_f;
  const Matrix<S> f = kernels::rms_norm(x, w.final_norm, c.norm_eps, &inv_f);
  const Matrix<S> logits = kernels::project_vocab(f, w.output_head, w.token_embedding);

  const S n_pred = static_cast<S>(seq - 1);
  S loss = 0;
  Matrix<S> dlogits = Matrix<S>::Zero(seq, c.vocab_size);
  for (Eigen::Index t = 0; t + 1 < seq; ++t) {
    const S m = logits.row(t).maxCoeff();
    const auto e = (logits.row(t).array() - m).exp().eval();
    const S z = e.sum();
    loss -= logits(t, tokens[t + 1]) - m - std::log(z);
    dlogits.row(t) = (e / z).matrix() / n_pred;
    dlogits(t, tokens[t + 1]) -= S(1) / n_pred;
  }
  loss /= n_pred;
  if (!grad) return loss;

  // Backward.
  auto& gw = *grad;
  Matrix<S> df;
  if (w.output_head.size() > 0) {
    gw.output_head.noalias() += f.transpose() * dlogits;
    df = dlogits * w.output_head.transpose();
  } else {
    gw.token_embedding.noalias() += dlogits.transpose() * f;
    df = dlogits * w.token_embedding;
  }
  Matrix<S> dx = rms_norm_backward(x, w.final_norm, inv_f, df, gw.final_norm);

  for (int l = c.n_layers - 1; l >= 0; --l) {
    const auto& lw = w.layers[l];
    auto& lg = gw.layers[l];
    const auto& lc = cache[l];

    // FFN block: x_out = x_mid + h down^T.
    lg.down_proj.noalias() += dx.transpose() * lc.h;
    const Matrix<S> dh = dx * lw.down_proj;
    Matrix<S> dg(seq, c.d_ff), du(seq, c.d_ff);
    for (Eigen::Index t = 0; t < seq; ++t) {
      for (Eigen::Index i = 0; i < c.d_ff; ++i) {
        const S gv = lc.g(t, i);
        const S sig = kernels::sigmoid(gv);
        du(t, i) = dh(t, i) * gv * sig;
        dg(t, i) = dh(t, i) * lc.u(t, i) * sig * (S(1) + gv * (S(1) - sig));
      }
    }
    lg.gate_proj.noalias() += dg.transpose() * lc.b;
    lg.up_proj.noalias() += du.transpose() * lc.b;
    const Matrix<S> db = dg * lw.gate_proj + du * lw.up_proj;
    dx += rms_norm_backward(lc.x_mid, lw.ffn_norm, lc.inv_b, db, lg.ffn_norm);

    // Attention block: x_mid = x_in + attn wo^T.
    lg.wo.noalias() += dx.transpose() * lc.attn;
    const Matrix<S> dattn = dx * lw.wo;
    Matrix<S> dq = Matrix<S>::Zero(seq, c.d_model), dk = dq, dv = dq;
    for (int h = 0; h < c.n_heads; ++h) {
      const auto& p = lc.probs[h];
      const auto qh = lc.q.middleCols(h * hd, hd);
      const auto kh = lc.k.middleCols(h * hd, hd);
      const auto vh = lc.v.middleCols(h * hd, hd);
      const auto doh = dattn.middleCols(h * hd, hd);
      const Matrix<S> dp = doh * vh.transpose();
      dv.middleCols(h * hd, hd).noalias() += p.transpose() * doh;
      Matrix<S> ds = p.cwiseProduct(dp);
      const Vector<S> rowdot = ds.rowwise().sum();
      ds -= p.cwiseProduct(rowdot.replicate(1, seq));
      dq.middleCols(h * hd, hd).noalias() += (ds * kh) * scale;
      dk.middleCols(h * hd, hd).noalias() += (ds.transpose() * qh) * scale;
    }
    kernels::apply_rope(dq, c.n_heads, rope, /*inverse=*/true);
    kernels::apply_rope(dk, c.n_heads, rope, /*inverse=*/true);
    lg.wq.noalias() += dq.transpose() * lc.a;
    lg.wk.noalias() += dk.transpose() * lc.a;
    lg.wv.noalias() += dv.transpose() * lc.a;
    const Matrix<S> da = dq * lw.wq + dk * lw.wk + dv * lw.wv;
    dx += rms_norm_backward(lc.x_in, lw.attn_norm, lc.inv_a, da, lg.attn_norm);
  }
  for (Eigen::Index t = 0; t < seq; ++t) gw.token_embedding.row(tokens[t]) += dx.row(t);
  return loss;
}

template float loss_and_grad(const ModelConfig&, const DecoderWeights<float>&, std::span<const TokenId>,
                             DecoderWeights<float>*);
template double loss_and_grad(const ModelConfig&, const DecoderWeights<double>&, std::span<const TokenId>,
                              DecoderWeights<double>*);

TrainReport train(ModelBundle& model, std::span<const std::vector<TokenId>> samples, const TrainConfig& cfg) {
  model.validate();
  std::vector<const std::vector<TokenId>*> usable;
  for (const auto& s : samples) {
    if (s.size() >= 2) usable.push_back(&s);
  }
  if (usable.empty()) throw DataError("train: no sample has two or more tokens");
  if (cfg.steps < 0 || cfg.batch_size < 1 || cfg.seq_len < 2) throw DataError("train: invalid configuration");
  const size_t window = static_cast<size_t>(std::min(cfg.seq_len, model.config.max_seq_len));

  Rng rng(cfg.seed);
  auto m1 = DecoderWeights<float>::zeros(model.config);
  auto m2 = DecoderWeights<float>::zeros(model.config);
  auto params = tensor_refs(model.weights);
  auto first = tensor_refs(m1);
  auto second = tensor_refs(m2);

  TrainReport report;
  for (int step = 1; step <= cfg.steps; ++step) {
    auto grad = DecoderWeights<float>::zeros(model.config);
    double batch_loss = 0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const auto& s = *usable[rng.below(usable.size())];
      const size_t len = std::min(window, s.size());
      const size_t start = s.size() > len ? rng.below(s.size() - len + 1) : 0;
      batch_loss += loss_and_grad<float>(model.config, model.weights,
                                         std::span<const TokenId>(s.data() + start, len), &grad);
    }
    report.losses.push_back(batch_loss / cfg.batch_size);

    auto grads = tensor_refs(grad);
    double sq = 0;
    for (auto& g : grads) {
      for (float& v : g.data) {
        v /= static_cast<float>(cfg.batch_size);
        sq += static_cast<double>(v) * v;
      }
    }
    const double norm = std::sqrt(sq);
    const float clip = cfg.clip_norm > 0 && norm > cfg.clip_norm ? static_cast<float>(cfg.clip_norm / norm) : 1.0f;
    const double bc1 = 1.0 - std::pow(cfg.beta1, step), bc2 = 1.0 - std::pow(cfg.beta2, step);
    for (size_t t = 0; t < params.size(); ++t) {
      auto p = params[t].data;
      auto g = grads[t].data;
      auto a = first[t].data;
      auto v = second[t].data;
      for (size_t i = 0; i < p.size(); ++i) {
        const double gi = static_cast<double>(g[i]) * clip;
        a[i] = static_cast<float>(cfg.beta1 * a[i] + (1 - cfg.beta1) * gi);
        v[i] = static_cast<float>(cfg.beta2 * v[i] + (1 - cfg.beta2) * gi * gi);
        const double update = cfg.learning_rate * (a[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.adam_eps);
        p[i] = static_cast<float>(p[i] - update);
      }
    }
  }
  model.validate();
  return report;
}

}  // namespace moelens
