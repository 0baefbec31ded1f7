#include "moelens/toy.hpp"

#include "moelens/rng.hpp"

#include <algorithm>
#include <cmath>

namespace moelens {

ModelBundle random_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelBundle m;
  m.config = config;
  m.weights = DecoderWeights<float>::zeros(config);
  Rng rng(seed);
  auto fill = [&](auto& t, double sd) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<float>(rng.normal() * sd);
  };
  const double d = config.d_model, f = config.d_ff;
  fill(m.weights.token_embedding, 1.0);
  for (auto& l : m.weights.layers) {
    l.attn_norm.setOnes();
    fill(l.wq, 1.0 / std::sqrt(d));
    fill(l.wk, 1.0 / std::sqrt(d));
    fill(l.wv, 1.0 / std::sqrt(d));
    fill(l.wo, 1.0 / std::sqrt(d));
    l.ffn_norm.setOnes();
    fill(l.up_proj, 1.0 / std::sqrt(d));
    fill(l.gate_proj, 1.0 / std::sqrt(d));
    fill(l.down_proj, 1.0 / std::sqrt(f));
  }
  m.weights.final_norm.setOnes();
  if (!config.tied_head) fill(m.weights.output_head, 1.0 / std::sqrt(d));
  return m;
}

SyntheticLanguage SyntheticLanguage::make(std::string tag, char first_letter, int n_letters, int n_words,
                                          std::uint64_t seed) {
  SyntheticLanguage lang;
  lang.tag = std::move(tag);
  for (int i = 0; i < n_letters; ++i) lang.alphabet.push_back(static_cast<char>(first_letter + i));
  Rng rng(seed);
  while (static_cast<int>(lang.lexicon.size()) < n_words) {
    const int len = 2 + static_cast<int>(rng.below(4));
    std::string w;
    for (int i = 0; i < len; ++i) w.push_back(lang.alphabet[rng.below(lang.alphabet.size())]);
    bool dup = false;
    for (const auto& x : lang.lexicon) dup = dup || x == w;
    if (!dup) lang.lexicon.push_back(w);
  }
  lang.successors.resize(n_words);
  for (auto& s : lang.successors) {
    for (int k = 0; k < 3; ++k) s.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(n_words))));
  }
  return lang;
}

std::string SyntheticLanguage::sentence(Rng& rng, int n_words) const {
  std::string out;
  int w = static_cast<int>(rng.below(lexicon.size()));
  for (int i = 0; i < n_words; ++i) {
    if (i) out.push_back(' ');
    out += lexicon[w];
    // Mostly follow the chain; occasionally jump anywhere.
    w = rng.uniform() < 0.9 ? successors[w][rng.below(successors[w].size())]
                            : static_cast<int>(rng.below(lexicon.size()));
  }
  return out;
}

std::vector<SyntheticLanguage> bilingual_languages(std::uint64_t seed) {
  return {SyntheticLanguage::make("la", 'a', 13, 48, seed * 2 + 1), SyntheticLanguage::make("lb", 'n', 13, 48, seed * 2 + 2)};
}

std::vector<std::string> synthetic_corpus(const SyntheticLanguage& language, int n_samples, int words_per_sample,
                                          std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::string> out;
  out.reserve(n_samples);
  for (int i = 0; i < n_samples; ++i) out.push_back(language.sentence(rng, words_per_sample));
  return out;
}

std::set<unsigned char> token_types(const std::vector<std::string>& texts) {
  std::set<unsigned char> types;
  for (const auto& t : texts) types.insert(t.begin(), t.end());
  return types;
}

double token_type_overlap(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const auto ta = token_types(a), tb = token_types(b);
  std::set<unsigned char> all = ta;
  all.insert(tb.begin(), tb.end());
  if (all.empty()) return 0.0;
  int shared = 0;
  for (unsigned char c : ta) shared += tb.count(c) ? 1 : 0;
  return static_cast<double>(shared) / static_cast<double>(all.size());
}

std::vector<McqItem> synthetic_mcq(const SyntheticLanguage& language, int n_items, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<McqItem> items;
  const int n_words = static_cast<int>(language.lexicon.size());
  for (int i = 0; i < n_items; ++i) {
    std::string question;
    int w = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_words)));
    for (int k = 0; k < 4; ++k) {
      if (k) question.push_back(' ');
      question += language.lexicon[w];
      if (k < 3) w = language.successors[w][rng.below(language.successors[w].size())];
    }
    const auto& next = language.successors[w];
    const int correct_word = next[rng.below(next.size())];
    McqItem item;
    item.question = question;
    item.answer = static_cast<int>(rng.below(5));
    for (int o = 0; o < 5; ++o) {
      int word = correct_word;
      if (o != item.answer) {
        do {
          word = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_words)));
        } while (std::find(next.begin(), next.end(), word) != next.end());
      }
      item.options.push_back(" " + language.lexicon[word]);
    }
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<GenItem> synthetic_gen(const SyntheticLanguage& language, int n_items, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GenItem> items;
  for (int i = 0; i < n_items; ++i) {
    const int a = static_cast<int>(rng.below(10)), b = static_cast<int>(rng.below(10));
    items.push_back({language.sentence(rng, 3) + " " + std::to_string(a) + " " + std::to_string(b) + " ",
                     std::to_string(a + b)});
  }
  return items;
}

}  // namespace moelens
