#include "moelens/expert_split.hpp"

#include "moelens/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

namespace moelens {

namespace {

MatrixD prepare_points(const MatrixF& rows, bool standardize) {
  MatrixD x = rows.cast<double>();
  if (standardize) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double mean = x.row(i).mean();
      x.row(i).array() -= mean;
      const double sd = std::sqrt(x.row(i).squaredNorm() / static_cast<double>(x.cols()));
      if (sd > 0) x.row(i) /= sd;
    }
  }
  return x;
}

MatrixD squared_distances(const MatrixD& x, const MatrixD& c) {
  MatrixD d(x.rows(), c.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.rows(); ++j) d(i, j) = (x.row(i) - c.row(j)).squaredNorm();
  }
  return d;
}

MatrixD initial_centroids(const MatrixD& x, int k, const ClusterConfig& cfg) {
  const Eigen::Index n = x.rows();
  Rng rng(cfg.seed);
  std::vector<Eigen::Index> chosen;
  chosen.reserve(k);
  if (cfg.init == ClusterInit::random) {
    std::vector<Eigen::Index> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (int j = 0; j < k; ++j) {
      const auto r = j + static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n - j)));
      std::swap(idx[j], idx[r]);
      chosen.push_back(idx[j]);
    }
  } else {
    std::vector<bool> taken(n, false);
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    Eigen::Index next = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
    for (int j = 0; j < k; ++j) {
      chosen.push_back(next);
      taken[next] = true;
      if (j + 1 == k) break;
      double total = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        nearest[i] = std::min(nearest[i], (x.row(i) - x.row(next)).squaredNorm());
        if (!taken[i]) total += nearest[i];
      }
      if (total > 0) {
        double target = rng.uniform() * total;
        next = -1;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (taken[i]) continue;
          next = i;
          target -= nearest[i];
          if (target < 0 && nearest[i] > 0) break;
        }
      } else {
        // Remaining points coincide with chosen centroids; pick uniformly.
        auto r = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n - j - 1)));
        for (Eigen::Index i = 0; i < n; ++i) {
          if (taken[i]) continue;
          if (r-- == 0) {
            next = i;
            break;
          }
        }
      }
    }
  }
  MatrixD c(k, x.cols());
  for (int j = 0; j < k; ++j) c.row(j) = x.row(chosen[j]);
  return c;
}

std::vector<int> balanced_assign(const MatrixD& dist2, int capacity) {
  const Eigen::Index n = dist2.rows(), k = dist2.cols();
  std::vector<double> margin(n, 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity(), second = best;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double d = std::sqrt(dist2(i, j));
      if (d < best) {
        second = best;
        best = d;
      } else if (d < second) {
        second = d;
      }
    }
    margin[i] = k > 1 ? second - best : 0.0;
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return margin[a] > margin[b]; });

  std::vector<int> room(k, capacity);
  std::vector<int> assignment(n, -1);
  for (int i : order) {
    int pick = -1;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (room[j] > 0 && (pick < 0 || dist2(i, j) < dist2(i, pick))) pick = static_cast<int>(j);
    }
    assignment[i] = pick;
    --room[pick];
  }
  return assignment;
}

double assignment_cost(const MatrixD& dist2, const std::vector<int>& assignment) {
  double s = 0;
  for (size_t i = 0; i < assignment.size(); ++i) s += dist2(static_cast<Eigen::Index>(i), assignment[i]);
  return s;
}

MatrixD cluster_means(const MatrixD& x, const std::vector<int>& assignment, int k) {
  MatrixD c = MatrixD::Zero(k, x.cols());
  std::vector<int> count(k, 0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    c.row(assignment[i]) += x.row(i);
    ++count[assignment[i]];
  }
  for (int j = 0; j < k; ++j) c.row(j) /= static_cast<double>(count[j]);
  return c;
}

}  // namespace

double within_cluster_ss(const MatrixD& points, std::span<const int> assignment, int n_experts) {
  const std::vector<int> a(assignment.begin(), assignment.end());
  const MatrixD c = cluster_means(points, a, n_experts);
  double s = 0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) s += (points.row(i) - c.row(a[i])).squaredNorm();
  return s;
}

LayerSplit split_layer(const MatrixF& up_rows, const ClusterConfig& cfg) {
  const Eigen::Index n = up_rows.rows();
  const int k = cfg.n_experts;
  if (k < 1 || n < 1 || n % k != 0)
    throw DataError("split: d_ff " + std::to_string(n) + " not divisible by n_experts " + std::to_string(k));
  if (!up_rows.allFinite()) throw DataError("split: up-projection rows contain non-finite values");
  if (cfg.max_iterations < 1) throw DataError("split: max_iterations must be >= 1");
  const int capacity = static_cast<int>(n / k);

  const MatrixD x = prepare_points(up_rows, cfg.standardize_rows);
  MatrixD centroids = initial_centroids(x, k, cfg);

  LayerSplit out;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    const MatrixD dist2 = squared_distances(x, centroids);
    std::vector<int> next = balanced_assign(dist2, capacity);
    out.iterations = it + 1;
    if (!out.assignment.empty()) {
      if (next == out.assignment || assignment_cost(dist2, next) >= assignment_cost(dist2, out.assignment)) {
        out.converged = true;
        break;
      }
    }
    out.assignment = std::move(next);
    centroids = cluster_means(x, out.assignment, k);
    double sse = 0;
    for (Eigen::Index i = 0; i < n; ++i) sse += (x.row(i) - centroids.row(out.assignment[i])).squaredNorm();
    out.objective.push_back(sse);
  }
  return out;
}

ExpertPartition split_model(const ModelBundle& model, const ClusterConfig& cfg, int workers) {
  const ModelConfig& c = model.config;
  if (cfg.n_experts < 1 || c.d_ff % cfg.n_experts != 0)
    throw DataError("split: d_ff " + std::to_string(c.d_ff) + " not divisible by n_experts " +
                    std::to_string(cfg.n_experts));
  ExpertPartition p;
  p.n_layers = c.n_layers;
  p.d_ff = c.d_ff;
  p.n_experts = cfg.n_experts;
  p.seed = cfg.seed;
  p.assignment.resize(c.n_layers);

  workers = std::clamp(workers, 1, c.n_layers);
  auto run = [&](int first) {
    for (int l = first; l < c.n_layers; l += workers)
      p.assignment[l] = split_layer(model.weights.layers[l].up_proj, cfg).assignment;
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::jthread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          run(w);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    pool.clear();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  p.validate();
  return p;
}

}  // namespace moelens
