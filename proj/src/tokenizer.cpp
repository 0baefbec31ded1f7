#include "moelens/tokenizer.hpp"

#include "moelens/io.hpp"

#include <json.hpp>

#include <sstream>

namespace moelens {

Tokenizer::Tokenizer(std::vector<std::string> pieces) : pieces_(std::move(pieces)) {
  for (size_t i = 0; i < pieces_.size(); ++i) {
    if (pieces_[i].size() < 2) throw DataError("tokenizer: vocabulary pieces must span at least two bytes");
    if (!lookup_.emplace(pieces_[i], kByteVocab + static_cast<TokenId>(i)).second)
      throw DataError("tokenizer: duplicate vocabulary piece");
    longest_ = std::max(longest_, pieces_[i].size());
  }
}

Tokenizer Tokenizer::from_vocab_file(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::string> pieces;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      pieces.push_back(nlohmann::json::parse(line).get<std::string>());
    } catch (const nlohmann::json::exception&) {
      throw DataError("tokenizer: vocabulary line " + std::to_string(line_no) + " is not a JSON string");
    }
  }
  return Tokenizer(std::move(pieces));
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  size_t pos = 0;
  while (pos < text.size()) {
    size_t matched = 0;
    for (size_t len = std::min(longest_, text.size() - pos); len >= 2; --len) {
      auto it = lookup_.find(std::string(text.substr(pos, len)));
      if (it != lookup_.end()) {
        ids.push_back(it->second);
        matched = len;
        break;
      }
    }
    if (matched == 0) {
      ids.push_back(static_cast<unsigned char>(text[pos]));
      matched = 1;
    }
    pos += matched;
  }
  return ids;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id >= 0 && id < 256) {
      out.push_back(static_cast<char>(id));
    } else if (id >= kByteVocab && id < vocab_size()) {
      out += pieces_[id - kByteVocab];
    }
  }
  return out;
}

}  // namespace moelens
