#include "moelens/pruning.hpp"

#include "moelens/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace moelens {

KeepMatrix keep_by_threshold(const MatrixD& freq, double tau) { return (freq.array() >= tau).matrix(); }

PruneMask mask_by_threshold(const FrequencyMatrix& freq, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw DataError("threshold tau must lie in [0, 1]");
  PruneMask m;
  m.keep = keep_by_threshold(freq.frequencies(), tau);
  m.provenance.kind = MaskProvenance::Kind::threshold;
  m.provenance.tau = tau;
  m.source = freq.id();
  return m;
}

int top_percent_count(int n_experts, double percent) {
  if (!(percent > 0.0 && percent <= 100.0)) throw DataError("top percent must lie in (0, 100]");
  return static_cast<int>(std::floor(percent * n_experts / 100.0 + 0.5));
}

KeepMatrix keep_by_top_percent(const MatrixD& freq, double percent) {
  if (!(percent > 0.0 && percent <= 100.0)) throw DataError("top percent must lie in (0, 100]");
  const int n = static_cast<int>(freq.cols());
  const int keep_n = top_percent_count(n, percent);
  KeepMatrix keep = KeepMatrix::Constant(freq.rows(), freq.cols(), false);
  std::vector<int> order(n);
  for (Eigen::Index l = 0; l < freq.rows(); ++l) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return freq(l, a) > freq(l, b); });
    for (int i = 0; i < keep_n; ++i) keep(l, order[i]) = true;
  }
  return keep;
}

PruneMask mask_by_top_percent(const FrequencyMatrix& freq, double percent) {
  PruneMask m;
  m.keep = keep_by_top_percent(freq.frequencies(), percent);
  m.provenance.kind = MaskProvenance::Kind::top_percent;
  m.provenance.percent = percent;
  m.source = freq.id();
  return m;
}

PruneMask mask_random_like(const PruneMask& reference, std::uint64_t seed) {
  if (reference.keep.size() == 0) throw DataError("random mask: reference mask is empty");
  Rng rng(seed);
  PruneMask m;
  m.keep = KeepMatrix::Constant(reference.n_layers(), reference.n_experts(), false);
  m.provenance.kind = MaskProvenance::Kind::random;
  m.provenance.seed = seed;
  m.provenance.layer_counts = reference.layer_keep_counts();
  m.source = reference.source.empty() ? reference.provenance.describe()
                                      : reference.source + "/" + reference.provenance.describe();
  std::vector<int> idx(reference.n_experts());
  for (int l = 0; l < reference.n_layers(); ++l) {
    std::iota(idx.begin(), idx.end(), 0);
    const int count = m.provenance.layer_counts[l];
    for (int j = 0; j < count; ++j) {
      const auto r = j + static_cast<int>(rng.below(static_cast<std::uint64_t>(idx.size() - j)));
      std::swap(idx[j], idx[r]);
      m.keep(l, idx[j]) = true;
    }
  }
  return m;
}

double tau_for_kept_proportion(const MatrixD& freq, double proportion) {
  if (freq.size() == 0 || !(proportion > 0.0 && proportion <= 1.0))
    throw DataError("tau_for_kept_proportion: proportion must lie in (0, 1]");
  std::vector<double> v(freq.data(), freq.data() + freq.size());
  std::sort(v.begin(), v.end(), std::greater<>());
  const auto need = static_cast<size_t>(std::ceil(proportion * static_cast<double>(v.size()) - 1e-9));
  return v[std::max<size_t>(need, 1) - 1];
}

FlopsEstimate estimate_flops(const ModelConfig& c, const PruneMask& mask, int seq_len) {
  if (mask.n_layers() != c.n_layers) throw DataError("estimate_flops: mask layers do not match config");
  if (mask.n_experts() < 1) throw DataError("estimate_flops: mask has no experts");
  if (seq_len < 1) throw DataError("estimate_flops: seq_len must be >= 1");
  const double d = c.d_model, f = c.d_ff, v = c.vocab_size, s = seq_len;
  const double attention = 8.0 * d * d + 4.0 * s * d;
  const double ffn = 6.0 * d * f;
  const double head = 2.0 * d * v;
  FlopsEstimate out;
  double kept_fraction_sum = 0;
  for (int l = 0; l < c.n_layers; ++l) {
    const double kept = static_cast<double>(mask.keep.row(l).count()) / static_cast<double>(mask.n_experts());
    kept_fraction_sum += kept;
    out.dense_flops += attention + ffn;
    out.pruned_flops += attention + ffn * kept;
  }
  out.dense_flops += head;
  out.pruned_flops += head;
  out.ffn_param_reduction = 1.0 - kept_fraction_sum / c.n_layers;
  out.total_flops_reduction = 1.0 - out.pruned_flops / out.dense_flops;
  return out;
}

}  // namespace moelens
