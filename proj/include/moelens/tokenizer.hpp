#pragma once

#include "moelens/types.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace moelens {

/// Byte-level tokenizer: ids 0-255 are raw bytes, then BOS, EOS, PAD.
/// An optional vocabulary of multi-byte pieces (ids from 259 upward) is
/// matched greedily, longest piece first.
class Tokenizer {
 public:
  static constexpr TokenId kBos = 256;
  static constexpr TokenId kEos = 257;
  static constexpr TokenId kPad = 258;
  static constexpr int kByteVocab = 259;

  Tokenizer() = default;
  explicit Tokenizer(std::vector<std::string> pieces);

  /// One JSON string per line; line i becomes id 259 + i.
  static Tokenizer from_vocab_file(const std::filesystem::path& path);

  std::vector<TokenId> encode(std::string_view text) const;
  /// Specials are dropped.
  std::string decode(std::span<const TokenId> ids) const;

  int vocab_size() const { return kByteVocab + static_cast<int>(pieces_.size()); }

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, TokenId> lookup_;
  size_t longest_ = 1;
};

}  // namespace moelens
