#pragma once

#include "moelens/profiler.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace moelens {

namespace detail {
template <typename DA, typename DB>
void require_same_shape(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DataError(std::string(what) + ": dimension mismatch (" + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
}
}  // namespace detail

inline constexpr double kKlSmoothing = 1e-10;

/// sqrt(sum (A - B)^2) over all cells.
template <typename DA, typename DB>
typename DA::Scalar euclidean_distance(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  detail::require_same_shape(a, b, "euclidean_distance");
  return (a - b).norm();
}

/// Turns a non-negative row into a distribution: normalize, add eps to every
/// cell, renormalize. An all-zero row becomes uniform.
template <typename Derived>
Vector<typename Derived::Scalar> smoothed_distribution(const Eigen::MatrixBase<Derived>& row,
                                                       typename Derived::Scalar eps = kKlSmoothing) {
  using S = typename Derived::Scalar;
  Vector<S> p = row.transpose();
  const S sum = p.sum();
  if (sum > S(0)) p /= sum;
  p.array() += eps;
  return p / p.sum();
}

/// Sum over rows of KL(P_l || Q_l), rows smoothed as in smoothed_distribution.
template <typename DA, typename DB>
typename DA::Scalar kl_rowwise(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b,
                               typename DA::Scalar eps = kKlSmoothing) {
  detail::require_same_shape(a, b, "kl_rowwise");
  using S = typename DA::Scalar;
  S total = 0;
  for (Eigen::Index l = 0; l < a.rows(); ++l) {
    const Vector<S> p = smoothed_distribution(a.row(l), eps);
    const Vector<S> q = smoothed_distribution(b.row(l), eps);
    total += (p.array() * (p.array() / q.array()).log()).sum();
  }
  return total;
}

struct PearsonResult {
  double value = 0.0;             // mean over rows
  std::vector<int> degenerate;    // rows where either side is constant (contribute 0)
};

/// Mean over rows of the Pearson correlation of A_l and B_l.
template <typename DA, typename DB>
PearsonResult pearson_rowwise(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b) {
  detail::require_same_shape(a, b, "pearson_rowwise");
  PearsonResult out;
  double sum = 0;
  for (Eigen::Index l = 0; l < a.rows(); ++l) {
    // Exact comparison: a rounded mean would leave a constant row a tiny variance.
    if (a.row(l).maxCoeff() == a.row(l).minCoeff() || b.row(l).maxCoeff() == b.row(l).minCoeff()) {
      out.degenerate.push_back(static_cast<int>(l));
      continue;
    }
    const auto x = (a.row(l).array() - a.row(l).mean()).eval();
    const auto y = (b.row(l).array() - b.row(l).mean()).eval();
    const double sxx = static_cast<double>(x.square().sum());
    const double syy = static_cast<double>(y.square().sum());
    const double r = static_cast<double>((x * y).sum()) / std::sqrt(sxx * syy);
    sum += std::clamp(r, -1.0, 1.0);
  }
  out.value = a.rows() > 0 ? sum / static_cast<double>(a.rows()) : 0.0;
  return out;
}

double euclidean_distance(const FrequencyMatrix& a, const FrequencyMatrix& b);
double kl_rowwise(const FrequencyMatrix& a, const FrequencyMatrix& b);
PearsonResult pearson_rowwise(const FrequencyMatrix& a, const FrequencyMatrix& b);

/// Pairwise language comparison. kl(i, j) = KL(language i || language j).
struct SimilarityReport {
  std::vector<std::string> language_tags;
  MatrixD euclidean;
  MatrixD kl;
  MatrixD pearson;
  Matrix<int> pearson_degenerate_rows;  // count of constant-row pairs per cell
};

SimilarityReport similarity_report(std::span<const FrequencyMatrix> matrices);
std::string similarity_to_json(const SimilarityReport& report);
SimilarityReport similarity_from_json(const std::string& text);

/// Number of languages in which each expert has frequency >= tau.
struct SharedExpertMap {
  Matrix<int> counts;  // n_layers x n_experts, entries in [0, n_languages]
  double tau = 0.05;
  int n_languages = 0;
  std::vector<std::string> language_tags;
};

SharedExpertMap shared_expert_map(std::span<const FrequencyMatrix> matrices, double tau = 0.05);
std::string shared_map_to_text(const SharedExpertMap& map);
SharedExpertMap shared_map_from_text(const std::string& text);

/// tuned frequency - base frequency, same language and expert split.
struct DiffMatrix {
  MatrixD values;
  std::string base_model;
  std::string tuned_model;
  std::string language_tag;
};

DiffMatrix diff_matrix(const FrequencyMatrix& base, const FrequencyMatrix& tuned);
std::string diff_to_text(const DiffMatrix& diff);
DiffMatrix diff_from_text(const std::string& text);

}  // namespace moelens
