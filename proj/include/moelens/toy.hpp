#pragma once

#include "moelens/eval.hpp"
#include "moelens/model.hpp"
#include "moelens/rng.hpp"

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace moelens {

/// Seeded random weights: norms at 1, projections N(0, 1/fan_in),
/// embeddings N(0, 1).
ModelBundle random_model(const ModelConfig& config, std::uint64_t seed);

/// A made-up language: its own letters, a fixed lexicon, and a word-bigram
/// chain so that text is predictable enough to learn.
struct SyntheticLanguage {
  std::string tag;
  std::string alphabet;
  std::vector<std::string> lexicon;
  std::vector<std::vector<int>> successors;  // preferred next words per word

  /// Letters [first, first + n_letters) of the ASCII range; the word
  /// separator is a space.
  static SyntheticLanguage make(std::string tag, char first_letter, int n_letters, int n_words, std::uint64_t seed);

  std::string sentence(Rng& rng, int n_words) const;
};

/// The two-language pair used by the bilingual fixture: "la" uses a-m,
/// "lb" uses n-z. Only the space is shared.
std::vector<SyntheticLanguage> bilingual_languages(std::uint64_t seed);

std::vector<std::string> synthetic_corpus(const SyntheticLanguage& language, int n_samples, int words_per_sample,
                                          std::uint64_t seed);

/// Distinct byte values occurring in the texts.
std::set<unsigned char> token_types(const std::vector<std::string>& texts);

/// |A n B| / |A u B| of the token-type sets.
double token_type_overlap(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Multiple-choice items: a sentence prefix and five candidate next words,
/// the correct one drawn from the bigram chain.
std::vector<McqItem> synthetic_mcq(const SyntheticLanguage& language, int n_items, std::uint64_t seed);

/// Prompt/answer items with numeric answers (format fixture; a toy model
/// rarely solves them).
std::vector<GenItem> synthetic_gen(const SyntheticLanguage& language, int n_items, std::uint64_t seed);

}  // namespace moelens
