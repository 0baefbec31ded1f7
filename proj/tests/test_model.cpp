#include "support.hpp"

#include "moelens/decoder.hpp"
#include "moelens/mask.hpp"
#include "moelens/mltb.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstring>

using namespace moelens;
using namespace moelens::testing;

namespace {

ModelConfig small_config() { return ModelConfig{2, 16, 32, 2, 40, 16}; }

// Absolute file offset and byte size of a named tensor, read straight from the header.
std::pair<size_t, size_t> locate(const std::string& bytes, const std::string& name) {
  std::uint64_t n = 0;
  for (int i = 0; i < 8; ++i) n |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[6 + i])) << (8 * i);
  const auto header = nlohmann::json::parse(bytes.substr(14, n));
  const size_t payload = (14 + n + 63) / 64 * 64;
  for (const auto& t : header.at("tensors")) {
    if (t.at("name") != name) continue;
    size_t count = 1;
    for (auto d : t.at("dims")) count *= d.get<size_t>();
    return {payload + t.at("offset").get<size_t>(), count * 4};
  }
  FAIL("tensor not found: " << name);
  return {0, 0};
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("mltb") {
  TEST_CASE("smallest legal config loads with all invariants") {
    const ModelConfig cfg{1, 8, 16, 2, 32, 16};
    const ModelBundle m = random_model(cfg, 5);
    const ModelBundle back = parse_mltb(serialize_mltb(m));
    CHECK(back.config == cfg);
    CHECK(back.weights.layers.size() == 1);
    CHECK_NOTHROW(back.validate());
    CHECK(back.parameter_count() == m.parameter_count());
  }

  TEST_CASE("save(load(f)) is byte identical") {
    for (bool tied : {false, true}) {
      ModelConfig cfg = small_config();
      cfg.tied_head = tied;
      const auto dir = scratch_dir("mltb-roundtrip");
      const std::string first = serialize_mltb(random_model(cfg, 11));
      const auto path = dir / "m.mltb";
      {
        std::ofstream out(path, std::ios::binary);
        out << first;
      }
      const ModelBundle m = load_model(path);
      save_model(m, dir / "again.mltb");
      std::ifstream in(dir / "again.mltb", std::ios::binary);
      const std::string second((std::istreambuf_iterator<char>(in)), {});
      CHECK(first == second);
    }
  }

  TEST_CASE("tensor payloads are 64-byte aligned and ordered") {
    const std::string bytes = serialize_mltb(random_model(small_config(), 2));
    CHECK(bytes.substr(0, 6) == "MLTB1\n");
    size_t prev = 0;
    for (const auto& [name, dims] : expected_tensors(small_config())) {
      const auto [at, size] = locate(bytes, name);
      CHECK(at % 64 == 0);
      CHECK(at >= prev);
      prev = at + size;
    }
  }

  TEST_CASE("file 4 bytes short inside up_proj names the tensor") {
    const ModelConfig cfg{1, 8, 16, 2, 32, 16, 1e4, 1e-5, true};  // up_proj is then near the end
    const std::string bytes = serialize_mltb(random_model(cfg, 3));
    const auto [at, size] = locate(bytes, "layer0.up_proj");
    const std::string cut = bytes.substr(0, at + size - 4);
    const std::string msg = error_of([&] { parse_mltb(cut); });
    CHECK(msg.find("truncated") != std::string::npos);
    CHECK(msg.find("layer0.up_proj") != std::string::npos);
  }

  TEST_CASE("non-finite weight is rejected with its tensor name") {
    std::string bytes = serialize_mltb(random_model(small_config(), 3));
    const auto [at, size] = locate(bytes, "layer1.wk");
    const float nan = std::nanf("");
    std::memcpy(bytes.data() + at + 8, &nan, 4);
    const std::string msg = error_of([&] { parse_mltb(bytes); });
    CHECK(msg.find("layer1.wk") != std::string::npos);
  }

  TEST_CASE("bad magic, bad config and shape mismatch are data errors") {
    std::string bytes = serialize_mltb(random_model(small_config(), 3));
    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(parse_mltb(bad), DataError);
    CHECK_THROWS_AS(parse_mltb(bytes.substr(0, 10)), DataError);

    ModelBundle m = random_model(small_config(), 3);
    m.weights.layers[1].down_proj.resize(3, 3);
    const std::string msg = error_of([&] { m.validate(); });
    CHECK(msg.find("layer1.down_proj") != std::string::npos);

    ModelConfig odd = small_config();
    odd.n_heads = 3;
    CHECK_THROWS_AS(odd.validate(), DataError);
    CHECK_THROWS_AS(load_model("/nonexistent/model.mltb"), DataError);
  }
}

TEST_SUITE("decoder") {
  TEST_CASE("forward is deterministic bitwise") {
    const ModelBundle m = random_model(small_config(), 7);
    const auto toks = random_tokens(12, 40, 1);
    CHECK(forward(m, toks) == forward(m, toks));
  }

  TEST_CASE("all-zero weights give all-zero logits") {
    ModelBundle m{small_config(), DecoderWeights<float>::zeros(small_config())};
    const MatrixF logits = forward(m, random_tokens(5, 40, 2));
    CHECK(logits.rows() == 5);
    CHECK(logits.cwiseAbs().maxCoeff() == 0.0f);
  }

  TEST_CASE("matches the independent reference decoder") {
    for (bool tied : {false, true}) {
      ModelConfig cfg = small_config();
      cfg.tied_head = tied;
      const ModelBundle m = random_model(cfg, 21);
      const auto toks = random_tokens(16, 40, 3);
      CHECK(max_abs_diff(forward(m, toks), reference_forward(m, toks).logits) < 1e-4);
    }
  }

  TEST_CASE("tap equals silu(gate x) * (up x) from a scalar oracle") {
    // One layer with the attention output projection zeroed: the FFN input is
    // then the normalized embedding row, which the oracle computes by hand.
    const ModelConfig cfg{1, 4, 6, 2, 10, 8};
    ModelBundle m = random_model(cfg, 13);
    m.weights.layers[0].wo.setZero();
    Rng rng(4);
    for (int i = 0; i < 4; ++i) m.weights.layers[0].ffn_norm(i) = static_cast<float>(0.5 + rng.uniform());
    const std::vector<TokenId> toks{3, 7, 1};
    std::vector<std::vector<float>> taps;
    forward(m, toks, [&](const ActivationTap& t) { taps.emplace_back(t.values.begin(), t.values.end()); });
    REQUIRE(taps.size() == 3);
    const auto& lw = m.weights.layers[0];
    for (size_t t = 0; t < toks.size(); ++t) {
      double ss = 0;
      for (int d = 0; d < 4; ++d) ss += std::pow(m.weights.token_embedding(toks[t], d), 2);
      const double inv = 1.0 / std::sqrt(ss / 4 + cfg.norm_eps);
      double x[4];
      for (int d = 0; d < 4; ++d) x[d] = m.weights.token_embedding(toks[t], d) * inv * lw.ffn_norm(d);
      for (int n = 0; n < 6; ++n) {
        double g = 0, u = 0;
        for (int d = 0; d < 4; ++d) {
          g += lw.gate_proj(n, d) * x[d];
          u += lw.up_proj(n, d) * x[d];
        }
        CHECK(std::abs(taps[t][n] - g / (1 + std::exp(-g)) * u) < 1e-6);
      }
    }
  }

  TEST_CASE("taps arrive layer by layer, positions ascending") {
    const ModelBundle m = random_model(small_config(), 1);
    std::vector<std::pair<int, int>> order;
    forward(m, random_tokens(4, 40, 1), [&](const ActivationTap& t) {
      CHECK(t.values.size() == 32);
      order.emplace_back(t.layer, t.token_position);
    });
    const std::vector<std::pair<int, int>> want{{0, 0}, {0, 1}, {0, 2}, {0, 3}, {1, 0}, {1, 1}, {1, 2}, {1, 3}};
    CHECK(order == want);
  }

  TEST_CASE("bad tokens are rejected") {
    const ModelBundle m = random_model(small_config(), 1);
    CHECK_THROWS_AS(forward(m, std::vector<TokenId>{1, 40}), DataError);
    CHECK_THROWS_AS(forward(m, std::vector<TokenId>{-1}), DataError);
    CHECK_THROWS_AS(forward(m, random_tokens(17, 40, 1)), DataError);
    CHECK(forward(m, std::vector<TokenId>{}).rows() == 0);
  }
}

TEST_SUITE("masked forward") {
  const ModelConfig cfg{2, 16, 32, 2, 40, 16};

  TEST_CASE("all-keep mask is bitwise identical to forward") {
    const ModelBundle m = random_model(cfg, 8);
    const auto p = simple_partition(2, 32, 8, 5);
    const auto toks = random_tokens(10, 40, 6);
    CHECK(forward_masked(m, toks, p, PruneMask::all_keep(2, 8)) == forward(m, toks));
  }

  TEST_CASE("all-drop mask equals a model without FFN blocks") {
    const ModelBundle m = random_model(cfg, 8);
    ModelBundle skipped = m;
    for (auto& l : skipped.weights.layers) l.down_proj.setZero();
    const auto p = simple_partition(2, 32, 8, 5);
    PruneMask none = PruneMask::all_keep(2, 8);
    none.keep.setConstant(false);
    const auto toks = random_tokens(10, 40, 6);
    bool taps_zero = true;
    const MatrixF masked =
        forward_masked(m, toks, p, none, [&](const ActivationTap& t) {
          for (float v : t.values) taps_zero = taps_zero && v == 0.0f;
        });
    CHECK(taps_zero);
    CHECK(masked == forward(skipped, toks));
    CHECK(max_abs_diff(masked, reference_forward(m, toks, {}, true).logits) < 1e-4);
  }

  TEST_CASE("single kept expert in layer 0 matches the restricted-matrix oracle") {
    const ModelBundle m = random_model(cfg, 9);
    const auto p = simple_partition(2, 32, 8, 17);
    const int e = 5;
    PruneMask mask = PruneMask::all_keep(2, 8);
    for (int j = 0; j < 8; ++j) mask.keep(0, j) = j == e;
    const auto toks = random_tokens(6, 40, 2);
    std::vector<std::vector<float>> taps0;
    const MatrixF logits = forward_masked(m, toks, p, mask, [&](const ActivationTap& t) {
      if (t.layer == 0) taps0.emplace_back(t.values.begin(), t.values.end());
    });
    const auto members = p.members(0, e);
    const auto ref = reference_forward(m, toks, [&](int l, int n) { return l != 0 || p.assignment[0][n] == e; });
    const auto& down = m.weights.layers[0].down_proj;
    for (size_t t = 0; t < toks.size(); ++t) {
      for (int n = 0; n < 32; ++n)
        if (p.assignment[0][n] != e) CHECK(taps0[t][n] == 0.0f);
      for (int d = 0; d < 16; ++d) {
        double y = 0;
        for (int n : members) y += static_cast<double>(down(d, n)) * taps0[t][n];
        CHECK(std::abs(y - ref.ffn_out[0][t][d]) < 1e-6);
      }
    }
    CHECK(max_abs_diff(logits, ref.logits) < 1e-4);
  }

  TEST_CASE("masked forward matches reference for a random mask") {
    const ModelBundle m = random_model(cfg, 10);
    const auto p = simple_partition(2, 32, 8, 3);
    Rng rng(9);
    PruneMask mask = PruneMask::all_keep(2, 8);
    for (Eigen::Index i = 0; i < mask.keep.size(); ++i) mask.keep.data()[i] = rng.uniform() < 0.6;
    const auto toks = random_tokens(9, 40, 4);
    const auto ref = reference_forward(m, toks, [&](int l, int n) { return mask.keep(l, p.assignment[l][n]); });
    CHECK(max_abs_diff(forward_masked(m, toks, p, mask), ref.logits) < 1e-4);
  }

  TEST_CASE("compacted weights agree with the masked path") {
    const ModelBundle m = random_model(cfg, 12);
    const auto p = simple_partition(2, 32, 8, 4);
    PruneMask mask = PruneMask::all_keep(2, 8);
    mask.keep(0, 1) = mask.keep(0, 6) = mask.keep(1, 0) = false;
    const CompactedModel c = compact(m, p, mask);
    CHECK(c.layers[0].neurons.size() == 24);
    CHECK(c.layers[1].neurons.size() == 28);
    CHECK(c.ffn_parameter_count() == (24 + 28) * 3 * 16);
    const auto toks = random_tokens(12, 40, 5);
    const MatrixF a = forward_masked(m, toks, p, mask), b = forward_compacted(c, toks);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-5);
  }

  TEST_CASE("shape mismatches are rejected") {
    const ModelBundle m = random_model(cfg, 12);
    const auto toks = random_tokens(3, 40, 5);
    CHECK_THROWS_AS(forward_masked(m, toks, simple_partition(2, 32, 8), PruneMask::all_keep(2, 4)), DataError);
    CHECK_THROWS_AS(forward_masked(m, toks, simple_partition(3, 32, 8), PruneMask::all_keep(3, 8)), DataError);
    CHECK_THROWS_AS(forward_masked(m, toks, simple_partition(2, 16, 8), PruneMask::all_keep(2, 8)), DataError);
  }
}
