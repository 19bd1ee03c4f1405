#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "dnmt/corpus/document.hpp"

namespace dnmt::corpus {

using TokenId = std::int32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kBosId = 1;
inline constexpr TokenId kEosId = 2;
inline constexpr TokenId kUnkId = 3;
inline constexpr TokenId kNumReserved = 4;

class Vocabulary {
 public:
  Vocabulary();

  // Keeps tokens seen at least min_count times, ordered by descending count
  // and then lexicographically.
  static Vocabulary build(const std::vector<Document>& docs, std::size_t min_count);
  // Regular tokens in id order (ids start after the reserved block).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  // File format: one regular token per line; line i holds id i + 4.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tokens_.size(); }
  TokenId id(const std::string& token) const;  // kUnkId when unknown
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  const std::string& token(TokenId id) const;

  std::vector<TokenId> encode(const Sentence& sentence) const;
  // Stops at eos; skips pad and bos.
  Sentence decode(const std::vector<TokenId>& ids) const;

  // Regular tokens only, in id order.
  std::vector<std::string> regular_tokens() const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  void insert(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace dnmt::corpus
