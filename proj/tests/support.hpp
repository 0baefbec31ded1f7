#pragma once

// Shared fixtures for the unit and acceptance tests. The reference decoder
// below is written with plain loops in double precision and deliberately
// shares no code with the library kernels.

#include "moelens/model.hpp"
#include "moelens/partition.hpp"
#include "moelens/rng.hpp"
#include "moelens/toy.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

namespace moelens::testing {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major

inline Mat to_mat(const MatrixF& m) {
  Mat out(static_cast<size_t>(m.rows()), Vec(static_cast<size_t>(m.cols())));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  return out;
}

inline Vec to_vec(const VectorF& v) { return Vec(v.data(), v.data() + v.size()); }

inline Vec matvec(const Mat& w, const Vec& x) {
  Vec y(w.size(), 0.0);
  for (size_t r = 0; r < w.size(); ++r)
    for (size_t c = 0; c < x.size(); ++c) y[r] += w[r][c] * x[c];
  return y;
}

inline Vec rms(const Vec& x, const Vec& w, double eps) {
  double ss = 0;
  for (double v : x) ss += v * v;
  const double inv = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + eps);
  Vec y(x.size());
  for (size_t i = 0; i < x.size(); ++i) y[i] = x[i] * inv * w[i];
  return y;
}

inline double silu_ref(double z) { return z / (1.0 + std::exp(-z)); }

struct ReferenceTrace {
  Mat logits;                  // seq x vocab
  std::vector<Mat> ffn_out;    // [layer] seq x d_model
  std::vector<Mat> ffn_input;  // [layer] seq x d_model (post-norm)
};

/// keep(layer, neuron) decides whether a hidden neuron contributes; `skip_ffn`
/// removes the FFN block entirely.
inline ReferenceTrace reference_forward(const ModelBundle& model, const std::vector<TokenId>& tokens,
                                        const std::function<bool(int, int)>& keep = {}, bool skip_ffn = false) {
  const ModelConfig& c = model.config;
  const auto& w = model.weights;
  const size_t seq = tokens.size();
  const int hd = c.head_dim();
  Mat x(seq);
  const Mat emb = to_mat(w.token_embedding);
  for (size_t t = 0; t < seq; ++t) x[t] = emb[tokens[t]];
  ReferenceTrace trace;
  for (int l = 0; l < c.n_layers; ++l) {
    const auto& lw = w.layers[l];
    const Mat wq = to_mat(lw.wq), wk = to_mat(lw.wk), wv = to_mat(lw.wv), wo = to_mat(lw.wo);
    Mat q(seq), k(seq), v(seq);
    for (size_t t = 0; t < seq; ++t) {
      const Vec a = rms(x[t], to_vec(lw.attn_norm), c.norm_eps);
      q[t] = matvec(wq, a);
      k[t] = matvec(wk, a);
      v[t] = matvec(wv, a);
      for (Vec* r : {&q[t], &k[t]}) {
        for (int h = 0; h < c.n_heads; ++h) {
          for (int i = 0; i < hd / 2; ++i) {
            const double ang = static_cast<double>(t) * std::pow(c.rope_theta, -2.0 * i / hd);
            const size_t p = static_cast<size_t>(h * hd + 2 * i);
            const double x0 = (*r)[p], x1 = (*r)[p + 1];
            (*r)[p] = x0 * std::cos(ang) - x1 * std::sin(ang);
            (*r)[p + 1] = x0 * std::sin(ang) + x1 * std::cos(ang);
          }
        }
      }
    }
    Mat attn(seq, Vec(static_cast<size_t>(c.d_model), 0.0));
    for (int h = 0; h < c.n_heads; ++h) {
      for (size_t i = 0; i < seq; ++i) {
        Vec s(i + 1);
        double mx = -1e300;
        for (size_t j = 0; j <= i; ++j) {
          double dot = 0;
          for (int d = 0; d < hd; ++d) dot += q[i][h * hd + d] * k[j][h * hd + d];
          s[j] = dot / std::sqrt(static_cast<double>(hd));
          mx = std::max(mx, s[j]);
        }
        double z = 0;
        for (double& e : s) z += (e = std::exp(e - mx));
        for (size_t j = 0; j <= i; ++j)
          for (int d = 0; d < hd; ++d) attn[i][h * hd + d] += s[j] / z * v[j][h * hd + d];
      }
    }
    for (size_t t = 0; t < seq; ++t) {
      const Vec o = matvec(wo, attn[t]);
      for (int d = 0; d < c.d_model; ++d) x[t][d] += o[d];
    }
    const Mat up = to_mat(lw.up_proj), gate = to_mat(lw.gate_proj), down = to_mat(lw.down_proj);
    Mat fin(seq), fout(seq, Vec(static_cast<size_t>(c.d_model), 0.0));
    for (size_t t = 0; t < seq; ++t) {
      fin[t] = rms(x[t], to_vec(lw.ffn_norm), c.norm_eps);
      if (skip_ffn) continue;
      const Vec u = matvec(up, fin[t]), g = matvec(gate, fin[t]);
      for (int n = 0; n < c.d_ff; ++n) {
        if (keep && !keep(l, n)) continue;
        const double hval = silu_ref(g[n]) * u[n];
        for (int d = 0; d < c.d_model; ++d) fout[t][d] += down[d][n] * hval;
      }
      for (int d = 0; d < c.d_model; ++d) x[t][d] += fout[t][d];
    }
    trace.ffn_input.push_back(fin);
    trace.ffn_out.push_back(fout);
  }
  const Mat head = c.tied_head ? Mat{} : to_mat(w.output_head);
  for (size_t t = 0; t < seq; ++t) {
    const Vec f = rms(x[t], to_vec(w.final_norm), c.norm_eps);
    Vec lg(static_cast<size_t>(c.vocab_size), 0.0);
    for (int vtok = 0; vtok < c.vocab_size; ++vtok)
      for (int d = 0; d < c.d_model; ++d) lg[vtok] += f[d] * (c.tied_head ? emb[vtok][d] : head[d][vtok]);
    trace.logits.push_back(lg);
  }
  return trace;
}

inline double max_abs_diff(const MatrixF& a, const Mat& b) {
  double m = 0;
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c) m = std::max(m, std::abs(a(r, c) - b[r][c]));
  return m;
}

inline std::vector<TokenId> random_tokens(int n, int vocab, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TokenId> t(static_cast<size_t>(n));
  for (auto& x : t) x = static_cast<TokenId>(rng.below(static_cast<std::uint64_t>(vocab)));
  return t;
}

inline MatrixD random_matrix(int rows, int cols, Rng& rng) {
  MatrixD m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform();
  return m;
}

/// Balanced partition with experts laid out contiguously, or shuffled by `seed`.
inline ExpertPartition simple_partition(int n_layers, int d_ff, int n_experts, std::uint64_t seed = 0) {
  ExpertPartition p{n_layers, d_ff, n_experts, seed, {}};
  const int size = d_ff / n_experts;
  Rng rng(seed);
  for (int l = 0; l < n_layers; ++l) {
    std::vector<int> a(static_cast<size_t>(d_ff));
    for (int i = 0; i < d_ff; ++i) a[i] = i / size;
    if (seed != 0)
      for (int i = d_ff - 1; i > 0; --i) std::swap(a[i], a[rng.below(static_cast<std::uint64_t>(i) + 1)]);
    p.assignment.push_back(a);
  }
  return p;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("moelens-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace moelens::testing
