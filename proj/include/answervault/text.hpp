#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace answervault {

using TokenId = std::int32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;

// Frequency-ranked token ids. Ids are dense; 0 and 1 are reserved for PAD/UNK.
class Vocabulary {
 public:
  Vocabulary();

  // Keeps the (max_size - 2) most frequent tokens of the normalized texts,
  // ties broken lexicographically.
  static Vocabulary build(const std::vector<std::string>& texts, std::size_t max_size);

  // Rebuilds from an explicit id-ordered token list (index = id).
  static Vocabulary from_tokens(std::vector<std::string> tokens, std::size_t max_size);

  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  std::size_t max_size() const { return max_size_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Line-delimited "token<TAB>id".
  std::string serialize() const;
  static Vocabulary deserialize(std::string_view text, std::size_t max_size);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path, std::size_t max_size);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t max_size_ = 2;
};

struct TokenSequence {
  std::vector<TokenId> ids;  // always max_len long, PAD after `length`
  std::size_t length = 0;
};

TokenSequence encode(const Vocabulary& vocab, std::string_view text, std::size_t max_len);

}  // namespace answervault
