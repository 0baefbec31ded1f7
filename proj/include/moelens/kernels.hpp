#pragma once

// Scalar-templated building blocks of the decoder, shared by inference
// (float) and training / gradient checking (float, double).

#include "moelens/types.hpp"

#include <cmath>
#include <vector>

namespace moelens::kernels {

/// y = x * rsqrt(mean(x^2) + eps) * weight, row by row. Stores the per-row
/// reciprocal RMS in `inv_rms` when requested (needed by the backward pass).
template <typename Scalar>
Matrix<Scalar> rms_norm(const Matrix<Scalar>& x, const Vector<Scalar>& weight, double eps,
                        Vector<Scalar>* inv_rms = nullptr) {
  Matrix<Scalar> y(x.rows(), x.cols());
  if (inv_rms) inv_rms->resize(x.rows());
  const Scalar n = static_cast<Scalar>(x.cols());
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    const Scalar r = Scalar(1) / std::sqrt(x.row(t).squaredNorm() / n + static_cast<Scalar>(eps));
    y.row(t) = (x.row(t) * r).cwiseProduct(weight.transpose());
    if (inv_rms) (*inv_rms)(t) = r;
  }
  return y;
}

template <typename Scalar>
Scalar silu(Scalar x) {
  return x / (Scalar(1) + std::exp(-x));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

/// cos/sin tables for rotary encoding: (seq_len x head_dim/2), pair i of a
/// head rotates by position * theta^(-2i/head_dim).
template <typename Scalar>
struct RopeTable {
  Matrix<Scalar> cos, sin;

  RopeTable(Eigen::Index seq_len, int head_dim, double theta) {
    const int half = head_dim / 2;
    cos.resize(seq_len, half);
    sin.resize(seq_len, half);
    for (Eigen::Index p = 0; p < seq_len; ++p) {
      for (int i = 0; i < half; ++i) {
        const double angle = static_cast<double>(p) * std::pow(theta, -2.0 * i / head_dim);
        cos(p, i) = static_cast<Scalar>(std::cos(angle));
        sin(p, i) = static_cast<Scalar>(std::sin(angle));
      }
    }
  }
};

/// Rotates adjacent pairs (2i, 2i+1) inside every head in place.
/// `inverse` applies the transpose rotation (used for gradients).
template <typename Scalar>
void apply_rope(Matrix<Scalar>& x, int n_heads, const RopeTable<Scalar>& table, bool inverse = false) {
  const int head_dim = static_cast<int>(x.cols()) / n_heads;
  const int half = head_dim / 2;
  for (Eigen::Index p = 0; p < x.rows(); ++p) {
    for (int h = 0; h < n_heads; ++h) {
      for (int i = 0; i < half; ++i) {
        const Eigen::Index a = h * head_dim + 2 * i;
        const Scalar c = table.cos(p, i);
        const Scalar s = inverse ? -table.sin(p, i) : table.sin(p, i);
        const Scalar x0 = x(p, a), x1 = x(p, a + 1);
        x(p, a) = x0 * c - x1 * s;
        x(p, a + 1) = x0 * s + x1 * c;
      }
    }
  }
}

/// Causal multi-head attention on already-rotated q, k. Returns the
/// concatenated head outputs (seq x d_model). When `probs` is non-null it
/// receives the softmax matrix of each head (seq x seq, zero above the
/// diagonal).
template <typename Scalar>
Matrix<Scalar> causal_attention(const Matrix<Scalar>& q, const Matrix<Scalar>& k, const Matrix<Scalar>& v,
                                int n_heads, std::vector<Matrix<Scalar>>* probs = nullptr) {
  const Eigen::Index seq = q.rows();
  const int head_dim = static_cast<int>(q.cols()) / n_heads;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(head_dim));
  Matrix<Scalar> out = Matrix<Scalar>::Zero(seq, q.cols());
  if (probs) probs->assign(n_heads, Matrix<Scalar>());
  for (int h = 0; h < n_heads; ++h) {
    const auto qh = q.middleCols(h * head_dim, head_dim);
    const auto kh = k.middleCols(h * head_dim, head_dim);
    const auto vh = v.middleCols(h * head_dim, head_dim);
    Matrix<Scalar> scores = (qh * kh.transpose()) * scale;
    for (Eigen::Index i = 0; i < seq; ++i) {
      const Scalar m = scores.row(i).head(i + 1).maxCoeff();
      Scalar sum = 0;
      for (Eigen::Index j = 0; j <= i; ++j) {
        scores(i, j) = std::exp(scores(i, j) - m);
        sum += scores(i, j);
      }
      for (Eigen::Index j = 0; j <= i; ++j) scores(i, j) /= sum;
      for (Eigen::Index j = i + 1; j < seq; ++j) scores(i, j) = 0;
    }
    out.middleCols(h * head_dim, head_dim).noalias() = scores * vh;
    if (probs) (*probs)[h] = std::move(scores);
  }
  return out;
}

/// Logits from the final hidden state: f * head (d_model x vocab), or
/// f * embedding^T for a tied head.
template <typename Scalar>
Matrix<Scalar> project_vocab(const Matrix<Scalar>& f, const Matrix<Scalar>& output_head,
                             const Matrix<Scalar>& token_embedding) {
  if (output_head.size() > 0) return f * output_head;
  return f * token_embedding.transpose();
}

}  // namespace moelens::kernels
