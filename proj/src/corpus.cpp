#include "moelens/corpus.hpp"

#include "moelens/io.hpp"

#include <json.hpp>

#include <sstream>

namespace moelens {

std::vector<std::string> read_text_corpus(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::string> texts;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      texts.push_back(nlohmann::json::parse(line).at("text").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return texts;
}

std::string write_text_corpus(const std::vector<std::string>& texts) {
  std::string out;
  for (const auto& t : texts) out += nlohmann::json{{"text", t}}.dump() + "\n";
  return out;
}

std::vector<TokenId> tokenize_sample(const Tokenizer& tokenizer, const std::string& text, int max_tokens) {
  std::vector<TokenId> ids{Tokenizer::kBos};
  const auto body = tokenizer.encode(text);
  ids.insert(ids.end(), body.begin(), body.end());
  if (max_tokens > 0 && static_cast<int>(ids.size()) > max_tokens) ids.resize(max_tokens);
  return ids;
}

}  // namespace moelens
