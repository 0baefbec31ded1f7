#pragma once

#include "moelens/tokenizer.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace moelens {

/// Reads JSON-lines samples {"text": ...}. Blank lines are skipped.
std::vector<std::string> read_text_corpus(const std::filesystem::path& path);
std::string write_text_corpus(const std::vector<std::string>& texts);

/// BOS followed by the encoded text, truncated to `max_tokens` tokens.
std::vector<TokenId> tokenize_sample(const Tokenizer& tokenizer, const std::string& text, int max_tokens);

}  // namespace moelens
