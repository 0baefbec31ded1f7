// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include "support.hpp"

#include "moelens/analysis.hpp"
#include "moelens/corpus.hpp"
#include "moelens/decoder.hpp"
#include "moelens/eval.hpp"
#include "moelens/expert_split.hpp"
#include "moelens/io.hpp"
#include "moelens/manifest.hpp"
#include "moelens/mask.hpp"
#include "moelens/profiler.hpp"
#include "moelens/pruning.hpp"
#include "moelens/render.hpp"
#include "moelens/repro.hpp"
#include "moelens/train.hpp"

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

using namespace moelens;
using namespace moelens::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& body) {
  Outcome o;
  const auto t0 = Clock::now();
  try {
    o = body();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  if (!o.pass) ++failures;
  char time[32];
  std::snprintf(time, sizeof time, "%.2fs", seconds_since(t0));
  std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << ": " << name << " (" << time << ")"
            << (o.detail.empty() ? "" : " - " + o.detail) << std::endl;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

// 1 ---------------------------------------------------------------------
Outcome dense_split_equivalence() {
  Outcome o;
  const auto t0 = Clock::now();
  const ModelConfig cfg{4, 64, 256, 4, 259, 64};
  const ModelBundle m = random_model(cfg, 101);
  ClusterConfig cc;
  cc.n_experts = 16;
  cc.seed = 1;
  const ExpertPartition p = split_model(m, cc);
  const auto toks = random_tokens(64, 259, 7);
  const MatrixF dense = forward(m, toks);
  o.require(forward_masked(m, toks, p, PruneMask::all_keep(4, 16)) == dense, "full mask not bitwise equal");
  Rng rng(3);
  double worst = 0;
  for (int trial = 0; trial < 3; ++trial) {
    PruneMask mask = PruneMask::all_keep(4, 16);
    for (Eigen::Index i = 0; i < mask.keep.size(); ++i) mask.keep.data()[i] = rng.uniform() < 0.7;
    const MatrixF a = forward_masked(m, toks, p, mask), b = forward_compacted(compact(m, p, mask), toks);
    worst = std::max(worst, static_cast<double>((a - b).cwiseAbs().maxCoeff()));
  }
  o.require(worst <= 1e-5, "compacted max-abs " + fmt(worst));
  const double t = seconds_since(t0);
  o.require(t < 5.0, "runtime " + fmt(t) + "s");
  o.detail += (o.detail.empty() ? "" : "; ") + std::string("compacted max-abs ") + fmt(worst);
  return o;
}

// 2 ---------------------------------------------------------------------
Outcome balance_and_determinism() {
  Outcome o;
  const ModelConfig cfg{4, 64, 256, 4, 259, 64};
  const ModelBundle m = random_model(cfg, 202);
  for (int e : {4, 16, 64}) {
    ClusterConfig cc;
    cc.n_experts = e;
    cc.seed = 5;
    const ExpertPartition a = split_model(m, cc), b = split_model(m, cc, 4);
    o.require(a == b, "E=" + std::to_string(e) + " runs differ");
    for (int l = 0; l < cfg.n_layers; ++l) {
      std::vector<int> sizes(static_cast<size_t>(e), 0);
      for (int x : a.assignment[l]) ++sizes[x];
      for (int s : sizes) o.require(s == cfg.d_ff / e, "unbalanced expert in layer " + std::to_string(l));
    }
  }
  return o;
}

// 3 ---------------------------------------------------------------------
Outcome selection_accounting() {
  Outcome o;
  const ModelConfig cfg{3, 32, 128, 4, 259, 64};
  const ModelBundle m = random_model(cfg, 303);
  const ExpertPartition p = simple_partition(3, 128, 16, 4);
  const auto lang = bilingual_languages(1)[0];
  Tokenizer tok;
  std::vector<std::vector<TokenId>> data;
  for (const auto& s : synthetic_corpus(lang, 40, 8, 2)) data.push_back(tokenize_sample(tok, s, 0));
  ProfileConfig pc;
  pc.max_tokens_per_sample = 40;
  const FrequencyMatrix full = profile_corpus(m, p, data, pc);
  o.require(full.counts.sum() == full.top_k * full.total_tokens, "sum of counts != top_k * tokens");
  const MatrixD f = full.frequencies();
  o.require(f.minCoeff() >= 0.0 && f.maxCoeff() <= 1.0, "frequency out of [0,1]");
  FrequencyMatrix merged = FrequencyMatrix::empty(3, 16, full.top_k, pc.language_tag, pc.model_id, p.fingerprint());
  for (size_t start = 0; start < data.size(); start += 7) {
    std::span<const std::vector<TokenId>> shard(data.data() + start, std::min<size_t>(7, data.size() - start));
    merged = merge(merged, profile_corpus(m, p, shard, pc));
  }
  o.require(merged == full, "shard merge differs from single pass");
  ProfileConfig threaded = pc;
  threaded.workers = 4;
  o.require(profile_corpus(m, p, data, threaded) == full, "worker count changes the result");
  return o;
}

// 4 ---------------------------------------------------------------------
double brute_euclid(const MatrixD& a, const MatrixD& b) {
  double s = 0;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) s += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
  return std::sqrt(s);
}

double brute_kl(const MatrixD& a, const MatrixD& b) {
  auto smooth = [](const MatrixD& m, int r) {
    double sum = 0;
    for (int j = 0; j < m.cols(); ++j) sum += m(r, j);
    std::vector<double> p(static_cast<size_t>(m.cols()));
    double z = 0;
    for (int j = 0; j < m.cols(); ++j) z += p[j] = (sum > 0 ? m(r, j) / sum : 0.0) + 1e-10;
    for (double& v : p) v /= z;
    return p;
  };
  double s = 0;
  for (int i = 0; i < a.rows(); ++i) {
    const auto p = smooth(a, i), q = smooth(b, i);
    for (size_t j = 0; j < p.size(); ++j) s += p[j] * std::log(p[j] / q[j]);
  }
  return s;
}

double brute_pearson(const MatrixD& a, const MatrixD& b) {
  double total = 0;
  const double n = static_cast<double>(a.cols());
  for (int i = 0; i < a.rows(); ++i) {
    double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
    for (int j = 0; j < a.cols(); ++j) {
      sx += a(i, j);
      sy += b(i, j);
      sxy += a(i, j) * b(i, j);
      sxx += a(i, j) * a(i, j);
      syy += b(i, j) * b(i, j);
    }
    total += (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
  }
  return total / static_cast<double>(a.rows());
}

Outcome metric_oracles() {
  Outcome o;
  Rng rng(404);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const MatrixD a = random_matrix(5, 8, rng), b = random_matrix(5, 8, rng);
    worst = std::max({worst, std::abs(euclidean_distance(a, b) - brute_euclid(a, b)),
                      std::abs(kl_rowwise(a, b) - brute_kl(a, b)),
                      std::abs(pearson_rowwise(a, b).value - brute_pearson(a, b))});
    o.require(kl_rowwise(a, b) >= 0.0, "negative KL");
    o.require(euclidean_distance(a, a) == 0.0, "d(A,A) != 0");
    o.require(std::abs(kl_rowwise(a, a)) <= 1e-12, "KL(A,A) != 0");
    o.require(std::abs(pearson_rowwise(a, a).value - 1.0) <= 1e-12, "pearson(A,A) != 1");
  }
  o.require(worst <= 1e-9, "max deviation " + fmt(worst));
  if (o.pass) o.detail = "max deviation " + fmt(worst);
  return o;
}

// 5 ---------------------------------------------------------------------
PruneMask uniform_mask(int layers, int experts, int kept) {
  PruneMask m = PruneMask::all_keep(layers, experts);
  for (int l = 0; l < layers; ++l)
    for (int e = kept; e < experts; ++e) m.keep(l, e) = false;
  return m;
}

Outcome flops_anchor() {
  Outcome o;
  const auto t0 = Clock::now();
  const ModelConfig l7{32, 4096, 11008, 32, 32000, 4096};
  const ModelConfig l70{80, 8192, 28672, 64, 32000, 4096};
  const FlopsEstimate e7 = estimate_flops(l7, uniform_mask(32, 4, 3), 200);
  const FlopsEstimate e70 = estimate_flops(l70, uniform_mask(80, 100, 87), 200);
  o.require(std::abs(e7.ffn_param_reduction - 0.25) < 1e-12, "7B FFN reduction is not 25%");
  o.require(std::abs(e70.ffn_param_reduction - 0.13) < 1e-12, "70B FFN reduction is not 13%");
  o.require(std::abs(e7.total_flops_reduction - 0.18) <= 0.03, "7B total " + fmt(e7.total_flops_reduction));
  o.require(std::abs(e70.total_flops_reduction - 0.09) <= 0.03, "70B total " + fmt(e70.total_flops_reduction));
  o.require(seconds_since(t0) < 1.0, "runtime");
  o.detail += (o.detail.empty() ? "" : "; ") + std::string("7B ") + fmt(100 * e7.total_flops_reduction) + "%, 70B " +
              fmt(100 * e70.total_flops_reduction) + "%";
  return o;
}

// 6 ---------------------------------------------------------------------
constexpr int kRepetitions = 10;
constexpr int kTrainSteps = 300;
constexpr int kExperts = 32;
constexpr double kKeptTarget = 0.8;
constexpr int kProfileSamples = 300;

Outcome pruning_beats_random() {
  Outcome o;
  const auto t0 = Clock::now();
  int wins = 0;
  double worst_train = 0;
  std::int64_t params = 0;
  Tokenizer tok;
  for (int rep = 0; rep < kRepetitions; ++rep) {
    const auto rep_start = Clock::now();
    const ModelConfig cfg{4, 32, 128, 4, Tokenizer::kByteVocab, 64};
    const auto langs = bilingual_languages(static_cast<std::uint64_t>(rep));
    std::vector<std::vector<TokenId>> train_set;
    std::vector<std::vector<std::string>> profile_texts(2), eval_texts(2);
    for (int l = 0; l < 2; ++l) {
      const std::uint64_t s = static_cast<std::uint64_t>(rep * 10 + l);
      for (const auto& t : synthetic_corpus(langs[l], 400, 10, 100 + s)) train_set.push_back(tokenize_sample(tok, t, 64));
      profile_texts[l] = synthetic_corpus(langs[l], kProfileSamples, 10, 200 + s);
      eval_texts[l] = synthetic_corpus(langs[l], 50, 10, 300 + s);
    }
    ModelBundle m = random_model(cfg, static_cast<std::uint64_t>(rep));
    params = m.parameter_count();
    TrainConfig tc;
    tc.steps = kTrainSteps;
    tc.seed = static_cast<std::uint64_t>(rep);
    train(m, train_set, tc);
    worst_train = std::max(worst_train, seconds_since(rep_start));

    ClusterConfig cc;
    cc.n_experts = kExperts;
    cc.seed = static_cast<std::uint64_t>(rep);
    const ExpertPartition p = split_model(m, cc);
    bool both = true;
    std::string line = "rep " + std::to_string(rep) + ":";
    for (int l = 0; l < 2; ++l) {
      std::vector<std::vector<TokenId>> samples;
      for (const auto& t : profile_texts[l]) samples.push_back(tokenize_sample(tok, t, 64));
      ProfileConfig pc;
      pc.language_tag = langs[l].tag;
      const FrequencyMatrix f = profile_corpus(m, p, samples, pc);
      const PruneMask mask = mask_by_threshold(f, tau_for_kept_proportion(f.frequencies(), kKeptTarget));
      if (mask.kept_proportion() < 0.7 || mask.kept_proportion() > 0.95) {
        o.require(false, "kept proportion " + fmt(mask.kept_proportion()) + " outside [0.7, 0.95]");
      }
      const double masked = perplexity(MaskedModel(m, p, mask), tok, eval_texts[l], 64).value;
      double random_mean = 0;
      for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const PruneMask r = mask_random_like(mask, seed);
        random_mean += perplexity(MaskedModel(m, p, r), tok, eval_texts[l], 64).value / 3.0;
      }
      both = both && masked <= random_mean;
      line += " " + langs[l].tag + " kept " + fmt(mask.kept_proportion()) + " ppl " + fmt(masked) + " vs random " +
              fmt(random_mean);
    }
    wins += both;
    std::cout << "      " << line << (both ? "" : "  (random not beaten)") << std::endl;
  }
  o.require(params <= 5'000'000, "model has " + std::to_string(params) + " parameters");
  o.require(worst_train <= 600, "training took " + fmt(worst_train) + "s");
  o.require(wins >= 9, "only " + std::to_string(wins) + "/10 repetitions");
  o.detail += (o.detail.empty() ? "" : "; ") + std::to_string(wins) + "/" + std::to_string(kRepetitions) +
              " repetitions, " + std::to_string(params) + " parameters, total " + fmt(seconds_since(t0)) + "s";
  return o;
}

// 7 ---------------------------------------------------------------------
Outcome threshold_semantics() {
  Outcome o;
  MatrixD edge(2, 2);
  edge << 0.05, 0.04, 0.2, 0.0;
  KeepMatrix want(2, 2);
  want << true, false, true, false;
  o.require(keep_by_threshold(edge, 0.05) == want, "inclusive boundary");
  Rng rng(707);
  for (int trial = 0; trial < 200; ++trial) {
    MatrixD f = random_matrix(4, 8, rng);
    const double t1 = rng.uniform(), t2 = t1 + (1 - t1) * rng.uniform();
    f(0, 0) = t1;  // a value exactly at the lower threshold
    const KeepMatrix a = keep_by_threshold(f, t1), b = keep_by_threshold(f, t2);
    o.require(a(0, 0), "value equal to tau dropped");
    o.require((b.array() <= a.array()).all(), "higher tau kept a new expert");
  }
  return o;
}

// 8 ---------------------------------------------------------------------
FrequencyMatrix random_freq(Rng& rng, const std::string& lang, int L = 4, int E = 8, int k = 3, int tokens = 30) {
  FrequencyMatrix f = FrequencyMatrix::empty(L, E, k, lang, "m", "p");
  for (int t = 0; t < tokens; ++t) {
    std::vector<int> cells(static_cast<size_t>(L * E));
    std::iota(cells.begin(), cells.end(), 0);
    for (int i = 0; i < k; ++i) {
      std::swap(cells[i], cells[i + rng.below(static_cast<std::uint64_t>(L * E - i))]);
      ++f.counts(cells[i] / E, cells[i] % E);
    }
  }
  f.total_tokens = tokens;
  return f;
}

Outcome shared_and_diff_bounds() {
  Outcome o;
  Rng rng(808);
  for (int trial = 0; trial < 50; ++trial) {
    const std::vector<FrequencyMatrix> ms{random_freq(rng, "aa"), random_freq(rng, "bb"), random_freq(rng, "cc")};
    Matrix<int> prev = shared_expert_map(ms, 0.0).counts;
    o.require((prev.array() == 3).all(), "tau=0 not all L");
    for (double tau = 0.025; tau <= 1.05; tau += 0.025) {
      const Matrix<int> cur = shared_expert_map(ms, tau).counts;
      o.require(cur.minCoeff() >= 0 && cur.maxCoeff() <= 3, "entry outside [0, L]");
      o.require((cur.array() <= prev.array()).all(), "not monotone in tau");
      prev = cur;
    }
    FrequencyMatrix tuned = random_freq(rng, "aa");
    tuned.model_id = "tuned";
    o.require(diff_matrix(ms[0], ms[0]).values.cwiseAbs().maxCoeff() == 0.0, "diff(base, base) != 0");
    o.require(diff_matrix(ms[0], tuned).values == -diff_matrix(tuned, ms[0]).values, "not antisymmetric");
  }
  return o;
}

// 9 ---------------------------------------------------------------------
Outcome render_validity() {
  Outcome o;
  Rng rng(909);
  HeatmapSpec spec;
  spec.grid = random_matrix(32, 256, rng);
  std::istringstream in(heatmap_svg(spec));
  boost::property_tree::ptree tree;
  boost::property_tree::read_xml(in, tree);
  std::function<int(const boost::property_tree::ptree&)> count = [&](const boost::property_tree::ptree& node) {
    int n = 0;
    for (const auto& [name, child] : node) {
      if (name == "rect" && child.get<std::string>("<xmlattr>.class", "") == "cell") ++n;
      if (name != "<xmlattr>") n += count(child);
    }
    return n;
  };
  const int cells = count(tree);
  o.require(tree.count("svg") == 1, "root element is not svg");
  o.require(cells == 8192, std::to_string(cells) + " cells");
  o.require(scale_color(0.0, ColorScale::diverging, -0.3, 0.8) == kDivergingNeutral, "diverging 0 is not neutral");
  o.require(scale_color(0.0, ColorScale::diverging, -1, 1) == kDivergingNeutral, "diverging 0 is not neutral");
  return o;
}

// 10 --------------------------------------------------------------------
std::map<std::string, std::string> digests(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = sha256_file(e.path());
  return out;
}

Outcome end_to_end_repro() {
  Outcome o;
  const auto t0 = Clock::now();
  const fs::path base = fs::temp_directory_path() / "moelens-acceptance-repro";
  fs::remove_all(base);
  ReproOptions opts;
  opts.out_dir = base / "run1";
  const ReproResult first = run_repro(opts);
  o.require(fs::exists(first.manifest), "no top-level manifest");
  opts.out_dir = base / "run2";
  opts.workers = 3;
  run_repro(opts);
  const auto d1 = digests(base / "run1"), d2 = digests(base / "run2");
  o.require(!d1.empty() && d1 == d2, "digests differ between runs");

  std::set<std::string> kinds;
  for (const auto& [rel, _] : d1) {
    const fs::path p(rel);
    const std::string name = p.filename().string();
    if (name.ends_with(".manifest.json")) kinds.insert("manifest");
    else if (name.ends_with(".flops.json")) kinds.insert("flops");
    else if (rel.starts_with("eval/")) kinds.insert("eval");
    else if (name == "similarity.json") kinds.insert("similarity");
    else if (name == "partition.json") kinds.insert("partition");
    else if (name == "summary.json") kinds.insert("summary");
    else kinds.insert(p.extension().string());
  }
  for (const char* k : {"manifest", "flops", "eval", "similarity", "partition", ".mltb", ".jsonl", ".freq", ".grid",
                        ".mask", ".svg"})
    o.require(kinds.count(k) == 1, std::string("missing artifact kind ") + k);
  // Every manifest's recorded digests match the files on disk.
  int manifests = 0;
  for (const auto& [rel, _] : d1) {
    if (!rel.ends_with(".manifest.json")) continue;
    ++manifests;
    const fs::path mp = base / "run1" / rel;
    const auto j = nlohmann::json::parse(read_text_file(mp));
    for (const char* side : {"inputs", "outputs"})
      for (const auto& e : j.at(side))
        o.require(sha256_file(mp.parent_path() / e.at("path").get<std::string>()) == e.at("sha256"),
                  "stale digest in " + rel);
  }
  const double t = seconds_since(t0);
  o.require(t < 900, "runtime " + fmt(t) + "s");
  o.detail += (o.detail.empty() ? "" : "; ") + std::to_string(d1.size()) + " files, " + std::to_string(manifests) +
              " manifests, identical digests";
  fs::remove_all(base);
  return o;
}

}  // namespace

int main() {
  std::cout << "moe-lens acceptance suite" << std::endl;
  report(1, "dense/split equivalence", dense_split_equivalence);
  report(2, "balanced, deterministic split", balance_and_determinism);
  report(3, "selection accounting and shard merge", selection_accounting);
  report(4, "metric oracles", metric_oracles);
  report(5, "FLOPs anchors", flops_anchor);
  report(6, "frequency pruning beats random at toy scale", pruning_beats_random);
  report(7, "threshold semantics", threshold_semantics);
  report(8, "shared-map and diff bounds", shared_and_diff_bounds);
  report(9, "render validity", render_validity);
  report(10, "end-to-end repro", end_to_end_repro);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
