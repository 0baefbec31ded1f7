#include "support.hpp"

#include "moelens/corpus.hpp"
#include "moelens/decoder.hpp"
#include "moelens/profiler.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

using namespace moelens;
using namespace moelens::testing;

TEST_SUITE("scores") {
  TEST_CASE("zero taps give zero scores") {
    const auto p = simple_partition(2, 8, 4, 3);
    CHECK(score_experts(MatrixF::Zero(2, 8), p).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("direct sums per expert") {
    ExpertPartition p{1, 4, 2, 0, {{0, 0, 1, 1}}};
    MatrixF taps(1, 4);
    taps << 1, 2, 3, 4;
    const MatrixD s = score_experts(taps, p);
    CHECK(s(0, 0) == 3.0);
    CHECK(s(0, 1) == 7.0);
  }

  TEST_CASE("expert scores sum to the layer total") {
    Rng rng(3);
    const auto p = simple_partition(3, 24, 6, 8);
    MatrixF taps(3, 24);
    for (Eigen::Index i = 0; i < taps.size(); ++i) taps.data()[i] = static_cast<float>(rng.normal());
    const MatrixD s = score_experts(taps, p);
    for (int l = 0; l < 3; ++l) CHECK(std::abs(s.row(l).sum() - taps.row(l).cast<double>().sum()) < 1e-6);
  }
}

TEST_SUITE("z-score") {
  TEST_CASE("row [1,2,3]") {
    MatrixD m(1, 3);
    m << 1, 2, 3;
    const MatrixD z = zscore_per_layer(m);
    CHECK(z(0, 0) == doctest::Approx(-1.224745).epsilon(1e-6));
    CHECK(z(0, 1) == doctest::Approx(0.0));
    CHECK(z(0, 2) == doctest::Approx(1.224745).epsilon(1e-6));
  }

  TEST_CASE("constant row maps to zeros") {
    const MatrixD z = zscore_per_layer(MatrixD::Constant(2, 4, 5.0));
    CHECK(z.cwiseAbs().maxCoeff() == 0.0);
    CHECK(zscore_per_layer(MatrixD::Constant(1, 6, 0.1)).cwiseAbs().maxCoeff() == 0.0);  // inexact mean
  }

  TEST_CASE("random rows have mean 0 and population std 1") {
    Rng rng(5);
    const MatrixD z = zscore_per_layer(random_matrix(6, 9, rng) * 7.0);
    for (int l = 0; l < 6; ++l) {
      const double mean = z.row(l).mean();
      CHECK(std::abs(mean) < 1e-6);
      CHECK(std::abs(std::sqrt((z.row(l).array() - mean).square().mean()) - 1.0) < 1e-6);
    }
  }

  TEST_CASE("positive affine maps per row leave the selection unchanged") {
    Rng rng(6);
    const MatrixD s = random_matrix(4, 8, rng);
    MatrixD t = s;
    for (int l = 0; l < 4; ++l) t.row(l) = t.row(l) * (1.0 + l) + MatrixD::Constant(1, 8, 3.0 * l);
    CHECK(select_top_k(zscore_per_layer(s), 5) == select_top_k(zscore_per_layer(t), 5));
  }
}

TEST_SUITE("top-k") {
  TEST_CASE("k = L x E selects every cell") {
    Rng rng(1);
    const auto sel = select_top_k(random_matrix(3, 4, rng), 12);
    CHECK(std::set<std::pair<int, int>>(sel.begin(), sel.end()).size() == 12);
  }

  TEST_CASE("three-way tie resolved by layer then expert") {
    MatrixD z(2, 3);
    z << 3, 1, 2, 2, 2, 0;
    const auto sel = select_top_k(z, 3);
    const std::vector<std::pair<int, int>> want{{0, 0}, {0, 2}, {1, 0}};
    CHECK(sel == want);
  }

  TEST_CASE("k = 1 picks the unique maximum") {
    MatrixD z = MatrixD::Zero(3, 3);
    z(2, 1) = 4;
    CHECK(select_top_k(z, 1) == std::vector<std::pair<int, int>>{{2, 1}});
  }

  TEST_CASE("matches an exhaustive sort oracle") {
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
      MatrixD z(3, 5);
      for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = static_cast<double>(rng.below(4));  // many ties
      std::vector<std::tuple<double, int, int>> cells;
      for (int l = 0; l < 3; ++l)
        for (int e = 0; e < 5; ++e) cells.emplace_back(-z(l, e), l, e);
      std::sort(cells.begin(), cells.end());
      std::vector<std::pair<int, int>> want;
      for (int i = 0; i < 6; ++i) want.emplace_back(std::get<1>(cells[i]), std::get<2>(cells[i]));
      CHECK(select_top_k(z, 6) == want);
    }
  }

  TEST_CASE("k out of range is rejected") {
    CHECK_THROWS_AS(select_top_k(MatrixD::Zero(2, 2), 5), DataError);
    CHECK_THROWS_AS(select_top_k(MatrixD::Zero(2, 2), 0), DataError);
  }
}

namespace {

const ModelConfig kCfg{2, 16, 48, 2, 30, 16};

std::vector<std::vector<TokenId>> samples(int n, std::uint64_t seed) {
  std::vector<std::vector<TokenId>> out;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) out.push_back(random_tokens(3 + static_cast<int>(rng.below(14)), 30, seed * 100 + i));
  return out;
}

ProfileConfig profile_config(int workers = 1) {
  ProfileConfig pc;
  pc.top_k = 3;
  pc.max_tokens_per_sample = 10;
  pc.language_tag = "xx";
  pc.model_id = "toy";
  pc.workers = workers;
  return pc;
}

}  // namespace

TEST_SUITE("profile") {
  TEST_CASE("frequency is count over tokens") {
    FrequencyMatrix f = FrequencyMatrix::empty(1, 2, 1, "xx", "toy");
    f.counts << 3, 7;
    f.total_tokens = 10;
    CHECK(f.frequencies()(0, 0) == doctest::Approx(0.3));
    CHECK_NOTHROW(f.validate());
    f.counts(0, 1) = 8;
    CHECK_THROWS_AS(f.validate(), DataError);
  }

  TEST_CASE("counts agree with an independent per-token recomputation") {
    const ModelBundle m = random_model(kCfg, 3);
    const auto p = simple_partition(2, 48, 8, 4);
    const auto data = samples(5, 1);
    const FrequencyMatrix f = profile_corpus(m, p, data, profile_config());
    CountMatrix want = CountMatrix::Zero(2, 8);
    std::int64_t tokens = 0;
    for (auto s : data) {
      if (s.size() > 10) s.resize(10);
      tokens += static_cast<std::int64_t>(s.size());
      std::vector<std::vector<double>> score(s.size() * 2, std::vector<double>(8, 0.0));
      forward(m, s, [&](const ActivationTap& t) {
        for (int n = 0; n < 48; ++n) score[t.token_position * 2 + t.layer][p.assignment[t.layer][n]] += t.values[n];
      });
      for (size_t pos = 0; pos < s.size(); ++pos) {
        std::vector<std::tuple<double, int, int>> cells;
        for (int l = 0; l < 2; ++l) {
          const auto& row = score[pos * 2 + l];
          const double mean = std::accumulate(row.begin(), row.end(), 0.0) / 8;
          double var = 0;
          for (double v : row) var += (v - mean) * (v - mean) / 8;
          for (int e = 0; e < 8; ++e) cells.emplace_back(var > 0 ? -(row[e] - mean) / std::sqrt(var) : 0.0, l, e);
        }
        std::sort(cells.begin(), cells.end());
        for (int i = 0; i < 3; ++i) ++want(std::get<1>(cells[i]), std::get<2>(cells[i]));
      }
    }
    CHECK(f.total_tokens == tokens);
    CHECK(f.counts == want);
    CHECK(f.partition_id == p.fingerprint());
  }

  TEST_CASE("conservation and bounds") {
    const ModelBundle m = random_model(kCfg, 4);
    const auto p = simple_partition(2, 48, 8, 2);
    const FrequencyMatrix f = profile_corpus(m, p, samples(9, 2), profile_config());
    CHECK(f.counts.sum() == f.top_k * f.total_tokens);
    const MatrixD fr = f.frequencies();
    CHECK(fr.minCoeff() >= 0.0);
    CHECK(fr.maxCoeff() <= 1.0);
    CHECK(default_top_k(32, 256) == 819);
    CHECK(default_top_k(1, 2) == 1);
  }

  TEST_CASE("shard merge equals a single pass, for any worker count") {
    const ModelBundle m = random_model(kCfg, 5);
    const auto p = simple_partition(2, 48, 8, 5);
    const auto data = samples(12, 3);
    const FrequencyMatrix full = profile_corpus(m, p, data, profile_config());
    FrequencyMatrix merged = FrequencyMatrix::empty(2, 8, 3, "xx", "toy", p.fingerprint());
    for (int shard = 0; shard < 4; ++shard) {
      std::span<const std::vector<TokenId>> part(data.data() + shard * 3, 3);
      merged = merge(merged, profile_corpus(m, p, part, profile_config()));
    }
    CHECK(merged == full);
    CHECK(profile_corpus(m, p, data, profile_config(3)) == full);
    CHECK(profile_corpus(m, p, data, profile_config(16)) == full);
  }

  TEST_CASE("merge identity, commutativity and mismatch errors") {
    const ModelBundle m = random_model(kCfg, 6);
    const auto p = simple_partition(2, 48, 8, 6);
    const auto a = profile_corpus(m, p, samples(3, 4), profile_config());
    const auto b = profile_corpus(m, p, samples(4, 5), profile_config());
    CHECK(merge(a, FrequencyMatrix::empty(2, 8, 3, "xx", "toy", p.fingerprint())) == a);
    CHECK(merge(a, b) == merge(b, a));
    FrequencyMatrix other = b;
    other.language_tag = "yy";
    CHECK_THROWS_AS(merge(a, other), DataError);
    other = b;
    other.top_k = 2;
    CHECK_THROWS_AS(merge(a, other), DataError);
  }

  TEST_CASE("max_samples limits the corpus") {
    const ModelBundle m = random_model(kCfg, 6);
    const auto p = simple_partition(2, 48, 8, 6);
    const auto data = samples(6, 6);
    ProfileConfig pc = profile_config();
    pc.max_samples = 2;
    std::span<const std::vector<TokenId>> head(data.data(), 2);
    CHECK(profile_corpus(m, p, data, pc) == profile_corpus(m, p, head, profile_config()));
  }

  TEST_CASE("text format round-trip and strict parsing") {
    const ModelBundle m = random_model(kCfg, 7);
    const auto p = simple_partition(2, 48, 8, 7);
    const auto f = profile_corpus(m, p, samples(3, 7), profile_config());
    const std::string text = frequency_to_text(f);
    CHECK(text.rfind("MOEFREQ v1 layers=2 experts=8", 0) == 0);
    CHECK(frequency_from_text(text) == f);
    const auto dir = scratch_dir("freq");
    save_frequency(f, dir / "x.freq");
    CHECK(load_frequency(dir / "x.freq") == f);

    CHECK_THROWS_AS(frequency_from_text("MOEFREQ v2 layers=1 experts=1\n0\n"), DataError);
    std::string broken = text;
    broken.back() = '\n';
    broken += "1,2\n";
    CHECK_THROWS_AS(frequency_from_text(broken), DataError);
    std::string negative = text;
    const auto nl = negative.find('\n');
    negative.insert(nl + 1, "-");
    CHECK_THROWS_AS(frequency_from_text(negative), DataError);
  }
}
