#pragma once

#include "moelens/model.hpp"
#include "moelens/partition.hpp"

#include <span>
#include <vector>

namespace moelens {

enum class ClusterInit { kmeans_plus_plus, random };

struct ClusterConfig {
  int n_experts = 256;
  int max_iterations = 100;
  std::uint64_t seed = 0;
  ClusterInit init = ClusterInit::kmeans_plus_plus;
  /// Z-standardize each up-projection row before clustering. Off by default:
  /// clustering runs on the raw parameters.
  bool standardize_rows = false;
};

struct LayerSplit {
  std::vector<int> assignment;   // neuron -> expert, each expert exactly d_ff / E members
  std::vector<double> objective; // within-cluster sum of squares after each centroid update
  int iterations = 0;
  bool converged = false;
};

/// Balanced K-Means over the rows of an up-projection matrix (one row per
/// neuron). Each round assigns neurons greedily in order of decreasing
/// (second-best - best) centroid distance to the nearest centroid that still
/// has room, then recomputes centroids as member means. A reassignment is
/// accepted only if it lowers the cost against the current centroids, so the
/// objective never increases. Ties resolve to the lowest index.
LayerSplit split_layer(const MatrixF& up_rows, const ClusterConfig& config);

/// Sum over neurons of squared distance to the mean of their cluster.
double within_cluster_ss(const MatrixD& points, std::span<const int> assignment, int n_experts);

/// One split_layer per layer (same seed for every layer). Layers may run on
/// `workers` threads; the result does not depend on the worker count.
ExpertPartition split_model(const ModelBundle& model, const ClusterConfig& config, int workers = 1);

}  // namespace moelens
