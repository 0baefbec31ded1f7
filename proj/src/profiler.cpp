#include "moelens/profiler.hpp"

#include "moelens/decoder.hpp"
#include "moelens/grid_io.hpp"
#include "moelens/io.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

namespace moelens {

int default_top_k(int n_layers, int n_experts) {
  return std::max(1, static_cast<int>(std::lround(0.1 * n_layers * n_experts)));
}

MatrixD FrequencyMatrix::frequencies() const {
  if (total_tokens == 0) return MatrixD::Zero(counts.rows(), counts.cols());
  return counts.cast<double>() / static_cast<double>(total_tokens);
}

void FrequencyMatrix::validate() const {
  if (counts.rows() < 1 || counts.cols() < 1) throw DataError("frequency matrix: empty grid");
  if (total_tokens < 0) throw DataError("frequency matrix: negative token count");
  if (top_k < 1 || top_k > counts.size())
    throw DataError("frequency matrix: top_k " + std::to_string(top_k) + " out of range");
  if ((counts.array() < 0).any() || (counts.array() > total_tokens).any())
    throw DataError("frequency matrix: counts must lie in [0, tokens]");
  if (counts.sum() != static_cast<std::int64_t>(top_k) * total_tokens)
    throw DataError("frequency matrix: counts sum " + std::to_string(counts.sum()) + " != topk * tokens " +
                    std::to_string(static_cast<std::int64_t>(top_k) * total_tokens));
}

FrequencyMatrix FrequencyMatrix::empty(int n_layers, int n_experts, int top_k, std::string language_tag,
                                       std::string model_id, std::string partition_id) {
  FrequencyMatrix f;
  f.counts = CountMatrix::Zero(n_layers, n_experts);
  f.top_k = top_k;
  f.language_tag = std::move(language_tag);
  f.model_id = std::move(model_id);
  f.partition_id = std::move(partition_id);
  return f;
}

namespace {

void add_layer_scores(std::span<const float> tap, const std::vector<int>& assignment, Eigen::Ref<VectorD> row) {
  row.setZero();
  for (size_t i = 0; i < tap.size(); ++i) row(assignment[i]) += static_cast<double>(tap[i]);
}

}  // namespace

MatrixD score_experts(const MatrixF& taps, const ExpertPartition& partition) {
  if (taps.rows() != partition.n_layers)
    throw DataError("score_experts: taps cover " + std::to_string(taps.rows()) + " layers, partition has " +
                    std::to_string(partition.n_layers));
  if (taps.cols() != partition.d_ff) throw DataError("score_experts: tap width does not match partition d_ff");
  MatrixD scores(partition.n_layers, partition.n_experts);
  VectorD row(partition.n_experts);
  for (int l = 0; l < partition.n_layers; ++l) {
    add_layer_scores(std::span<const float>(taps.row(l).data(), static_cast<size_t>(taps.cols())),
                     partition.assignment[l], row);
    scores.row(l) = row.transpose();
  }
  return scores;
}

MatrixD zscore_per_layer(const MatrixD& scores) {
  MatrixD z(scores.rows(), scores.cols());
  const double n = static_cast<double>(scores.cols());
  for (Eigen::Index l = 0; l < scores.rows(); ++l) {
    const double mean = scores.row(l).sum() / n;
    const double var = (scores.row(l).array() - mean).square().sum() / n;
    if (var == 0.0 || scores.row(l).maxCoeff() == scores.row(l).minCoeff()) {
      z.row(l).setZero();
    } else {
      z.row(l) = (scores.row(l).array() - mean) / std::sqrt(var);
    }
  }
  return z;
}

std::vector<std::pair<int, int>> select_top_k(const MatrixD& z, int k) {
  const Eigen::Index total = z.size();
  if (k < 1 || k > total)
    throw DataError("select_top_k: k " + std::to_string(k) + " outside [1, " + std::to_string(total) + "]");
  std::vector<Eigen::Index> idx(total);
  std::iota(idx.begin(), idx.end(), 0);
  // Flat row-major index order equals (layer, expert) order.
  auto better = [&](Eigen::Index a, Eigen::Index b) {
    const double va = z(a / z.cols(), a % z.cols()), vb = z(b / z.cols(), b % z.cols());
    if (va != vb) return va > vb;
    return a < b;
  };
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), better);
  std::vector<std::pair<int, int>> out;
  out.reserve(k);
  for (int i = 0; i < k; ++i) out.emplace_back(static_cast<int>(idx[i] / z.cols()), static_cast<int>(idx[i] % z.cols()));
  return out;
}

namespace {

void profile_sample(const ModelBundle& model, const ExpertPartition& partition, std::span<const TokenId> tokens,
                    int top_k, FrequencyMatrix& acc) {
  const int n_layers = partition.n_layers;
  std::vector<MatrixD> scores(tokens.size(), MatrixD(n_layers, partition.n_experts));
  VectorD row(partition.n_experts);
  forward(model, tokens, [&](const ActivationTap& tap) {
    add_layer_scores(tap.values, partition.assignment[tap.layer], row);
    scores[tap.token_position].row(tap.layer) = row.transpose();
  });
  for (const auto& s : scores) {
    for (auto [l, e] : select_top_k(zscore_per_layer(s), top_k)) ++acc.counts(l, e);
  }
  acc.total_tokens += static_cast<std::int64_t>(tokens.size());
}

}  // namespace

FrequencyMatrix profile_corpus(const ModelBundle& model, const ExpertPartition& partition,
                               std::span<const std::vector<TokenId>> samples, const ProfileConfig& cfg) {
  if (partition.n_layers != model.config.n_layers || partition.d_ff != model.config.d_ff)
    throw DataError("profile: partition does not match model");
  const int top_k = cfg.top_k > 0 ? cfg.top_k : default_top_k(partition.n_layers, partition.n_experts);
  if (top_k > partition.n_layers * partition.n_experts)
    throw DataError("profile: top_k " + std::to_string(top_k) + " exceeds n_layers * n_experts");

  std::vector<std::vector<TokenId>> work;
  for (const auto& s : samples) {
    if (cfg.max_samples > 0 && static_cast<int>(work.size()) >= cfg.max_samples) break;
    std::vector<TokenId> t = s;
    if (cfg.max_tokens_per_sample > 0 && static_cast<int>(t.size()) > cfg.max_tokens_per_sample)
      t.resize(cfg.max_tokens_per_sample);
    if (static_cast<int>(t.size()) > model.config.max_seq_len) t.resize(model.config.max_seq_len);
    if (!t.empty()) work.push_back(std::move(t));
  }
  if (work.empty()) throw DataError("profile: corpus has no tokens");

  const std::string pid = partition.fingerprint();
  auto blank = [&] {
    return FrequencyMatrix::empty(partition.n_layers, partition.n_experts, top_k, cfg.language_tag, cfg.model_id, pid);
  };
  const int workers = std::clamp(cfg.workers, 1, static_cast<int>(work.size()));
  std::vector<FrequencyMatrix> shards(workers, blank());
  std::vector<std::exception_ptr> errors(workers);
  const size_t per = (work.size() + workers - 1) / workers;
  auto run = [&](int w) {
    try {
      for (size_t i = w * per; i < std::min(work.size(), (w + 1) * per); ++i)
        profile_sample(model, partition, work[i], top_k, shards[w]);
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(run, w);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  FrequencyMatrix result = blank();
  for (const auto& s : shards) result = merge(result, s);
  result.validate();
  return result;
}

FrequencyMatrix merge(const FrequencyMatrix& a, const FrequencyMatrix& b) {
  if (a.counts.rows() != b.counts.rows() || a.counts.cols() != b.counts.cols())
    throw DataError("merge: dimension mismatch");
  if (a.top_k != b.top_k) throw DataError("merge: top_k mismatch");
  if (a.model_id != b.model_id) throw DataError("merge: model id mismatch ('" + a.model_id + "' vs '" + b.model_id + "')");
  if (a.language_tag != b.language_tag)
    throw DataError("merge: language mismatch ('" + a.language_tag + "' vs '" + b.language_tag + "')");
  if (a.partition_id != b.partition_id) throw DataError("merge: partition mismatch");
  FrequencyMatrix out = a;
  out.counts += b.counts;
  out.total_tokens += b.total_tokens;
  return out;
}

std::string frequency_to_text(const FrequencyMatrix& f) {
  GridFile g;
  g.fields = {{"tokens", std::to_string(f.total_tokens)},
              {"topk", std::to_string(f.top_k)},
              {"lang", f.language_tag},
              {"model", f.model_id}};
  if (!f.partition_id.empty()) g.fields.emplace_back("partition", f.partition_id);
  g.fields.emplace_back("count", "fed");
  g.cells = f.counts.cast<double>();
  return format_grid(g, true);
}

FrequencyMatrix frequency_from_text(const std::string& text) {
  const GridFile g = parse_grid(text);
  if (g.has_field("kind")) throw DataError("expected a frequency matrix, got a '" + g.field("kind") + "' grid");
  FrequencyMatrix f;
  try {
    f.total_tokens = std::stoll(g.field("tokens"));
    f.top_k = std::stoi(g.field("topk"));
  } catch (const std::logic_error&) {
    throw DataError("frequency matrix: bad tokens/topk header value");
  }
  f.language_tag = g.field("lang");
  f.model_id = g.field("model");
  if (g.has_field("partition")) f.partition_id = g.field("partition");
  if ((g.cells.array() != g.cells.array().round()).any()) throw DataError("frequency matrix: non-integer count");
  f.counts = g.cells.cast<std::int64_t>();
  f.validate();
  return f;
}

FrequencyMatrix load_frequency(const std::filesystem::path& path) { return frequency_from_text(read_text_file(path)); }

void save_frequency(const FrequencyMatrix& freq, const std::filesystem::path& path) {
  freq.validate();
  write_text_file(path, frequency_to_text(freq));
}

}  // namespace moelens
