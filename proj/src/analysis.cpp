#include "moelens/analysis.hpp"

#include "moelens/grid_io.hpp"
#include "moelens/io.hpp"

#include <json.hpp>

namespace moelens {

namespace {

void require_same_dims(const FrequencyMatrix& a, const FrequencyMatrix& b, const char* what) {
  if (a.n_layers() != b.n_layers() || a.n_experts() != b.n_experts())
    throw DataError(std::string(what) + ": frequency matrices differ in shape (" + a.id() + " vs " + b.id() + ")");
}

void require_consistent(std::span<const FrequencyMatrix> ms, size_t min_count, const char* what) {
  if (ms.size() < min_count)
    throw DataError(std::string(what) + ": need at least " + std::to_string(min_count) + " frequency matrices");
  for (const auto& m : ms) require_same_dims(ms[0], m, what);
}

}  // namespace

double euclidean_distance(const FrequencyMatrix& a, const FrequencyMatrix& b) {
  require_same_dims(a, b, "euclidean_distance");
  return euclidean_distance(a.frequencies(), b.frequencies());
}

double kl_rowwise(const FrequencyMatrix& a, const FrequencyMatrix& b) {
  require_same_dims(a, b, "kl_rowwise");
  return kl_rowwise(a.frequencies(), b.frequencies());
}

PearsonResult pearson_rowwise(const FrequencyMatrix& a, const FrequencyMatrix& b) {
  require_same_dims(a, b, "pearson_rowwise");
  return pearson_rowwise(a.frequencies(), b.frequencies());
}

SimilarityReport similarity_report(std::span<const FrequencyMatrix> matrices) {
  require_consistent(matrices, 2, "similarity_report");
  const Eigen::Index n = static_cast<Eigen::Index>(matrices.size());
  std::vector<MatrixD> freq;
  SimilarityReport r;
  for (const auto& m : matrices) {
    freq.push_back(m.frequencies());
    r.language_tags.push_back(m.language_tag);
  }
  r.euclidean = MatrixD::Zero(n, n);
  r.kl = MatrixD::Zero(n, n);
  r.pearson = MatrixD::Zero(n, n);
  r.pearson_degenerate_rows = Matrix<int>::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      r.kl(i, j) = kl_rowwise(freq[i], freq[j]);
      if (j < i) continue;
      r.euclidean(i, j) = r.euclidean(j, i) = euclidean_distance(freq[i], freq[j]);
      const PearsonResult p = pearson_rowwise(freq[i], freq[j]);
      r.pearson(i, j) = r.pearson(j, i) = p.value;
      r.pearson_degenerate_rows(i, j) = r.pearson_degenerate_rows(j, i) = static_cast<int>(p.degenerate.size());
    }
  }
  return r;
}

namespace {

template <typename M>
nlohmann::ordered_json rows_json(const M& m) {
  auto out = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = nlohmann::ordered_json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(row);
  }
  return out;
}

template <typename S>
Matrix<S> rows_from_json(const nlohmann::json& j, Eigen::Index n, const char* what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n)
    throw DataError(std::string("similarity report: '") + what + "' must be " + std::to_string(n) + "x" +
                    std::to_string(n));
  Matrix<S> m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!j[i].is_array() || static_cast<Eigen::Index>(j[i].size()) != n)
      throw DataError(std::string("similarity report: '") + what + "' row has wrong length");
    for (Eigen::Index k = 0; k < n; ++k) m(i, k) = j[i][k].get<S>();
  }
  return m;
}

}  // namespace

std::string similarity_to_json(const SimilarityReport& r) {
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["languages"] = r.language_tags;
  j["euclidean"] = rows_json(r.euclidean);
  j["kl"] = rows_json(r.kl);
  j["kl_direction"] = "KL(row || column)";
  j["kl_smoothing"] = kKlSmoothing;
  j["pearson"] = rows_json(r.pearson);
  j["pearson_degenerate_rows"] = rows_json(r.pearson_degenerate_rows);
  return j.dump(2) + "\n";
}

SimilarityReport similarity_from_json(const std::string& text) {
  SimilarityReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    r.language_tags = j.at("languages").get<std::vector<std::string>>();
    const auto n = static_cast<Eigen::Index>(r.language_tags.size());
    r.euclidean = rows_from_json<double>(j.at("euclidean"), n, "euclidean");
    r.kl = rows_from_json<double>(j.at("kl"), n, "kl");
    r.pearson = rows_from_json<double>(j.at("pearson"), n, "pearson");
    r.pearson_degenerate_rows = j.contains("pearson_degenerate_rows")
                                    ? rows_from_json<int>(j["pearson_degenerate_rows"], n, "pearson_degenerate_rows")
                                    : Matrix<int>::Zero(n, n);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed similarity report: ") + e.what());
  }
  return r;
}

SharedExpertMap shared_expert_map(std::span<const FrequencyMatrix> matrices, double tau) {
  require_consistent(matrices, 1, "shared_expert_map");
  if (!std::isfinite(tau)) throw DataError("shared_expert_map: tau must be finite");
  SharedExpertMap map;
  map.tau = tau;
  map.n_languages = static_cast<int>(matrices.size());
  map.counts = Matrix<int>::Zero(matrices[0].n_layers(), matrices[0].n_experts());
  for (const auto& m : matrices) {
    map.counts += (m.frequencies().array() >= tau).cast<int>().matrix();
    map.language_tags.push_back(m.language_tag);
  }
  return map;
}

std::string shared_map_to_text(const SharedExpertMap& map) {
  GridFile g;
  g.fields = {{"kind", "shared"}, {"τ", format_real(map.tau)}, {"langs", std::to_string(map.n_languages)}};
  std::string tags;
  for (const auto& t : map.language_tags) tags += (tags.empty() ? "" : ",") + t;
  if (!tags.empty()) g.fields.emplace_back("lang", tags);
  g.cells = map.counts.cast<double>();
  return format_grid(g, true);
}

SharedExpertMap shared_map_from_text(const std::string& text) {
  const GridFile g = parse_grid(text);
  if (!g.has_field("kind") || g.field("kind") != "shared") throw DataError("expected a 'kind=shared' grid");
  SharedExpertMap map;
  try {
    map.tau = std::stod(g.has_field("τ") ? g.field("τ") : g.field("tau"));
    map.n_languages = std::stoi(g.field("langs"));
  } catch (const std::logic_error&) {
    throw DataError("shared grid: bad tau/langs header value");
  }
  if (g.has_field("lang")) {
    const std::string& tags = g.field("lang");
    size_t start = 0;
    while (start <= tags.size()) {
      const size_t end = tags.find(',', start);
      map.language_tags.push_back(tags.substr(start, end - start));
      if (end == std::string::npos) break;
      start = end + 1;
    }
  }
  map.counts = g.cells.cast<int>();
  if ((map.counts.array() < 0).any() || (map.counts.array() > map.n_languages).any())
    throw DataError("shared grid: entries must lie in [0, langs]");
  return map;
}

DiffMatrix diff_matrix(const FrequencyMatrix& base, const FrequencyMatrix& tuned) {
  require_same_dims(base, tuned, "diff_matrix");
  if (base.language_tag != tuned.language_tag)
    throw DataError("diff_matrix: language mismatch ('" + base.language_tag + "' vs '" + tuned.language_tag + "')");
  if (base.partition_id != tuned.partition_id)
    throw DataError("diff_matrix: frequency matrices were profiled with different expert splits");
  DiffMatrix d;
  d.values = tuned.frequencies() - base.frequencies();
  d.base_model = base.model_id;
  d.tuned_model = tuned.model_id;
  d.language_tag = base.language_tag;
  return d;
}

std::string diff_to_text(const DiffMatrix& d) {
  GridFile g;
  g.fields = {{"kind", "diff"}, {"lang", d.language_tag}, {"base", d.base_model}, {"tuned", d.tuned_model}};
  g.cells = d.values;
  return format_grid(g, false);
}

DiffMatrix diff_from_text(const std::string& text) {
  const GridFile g = parse_grid(text);
  if (!g.has_field("kind") || g.field("kind") != "diff") throw DataError("expected a 'kind=diff' grid");
  DiffMatrix d;
  d.values = g.cells;
  d.language_tag = g.field("lang");
  d.base_model = g.field("base");
  d.tuned_model = g.field("tuned");
  if ((d.values.array().abs() > 1.0).any()) throw DataError("diff grid: entries must lie in [-1, 1]");
  return d;
}

}  // namespace moelens
