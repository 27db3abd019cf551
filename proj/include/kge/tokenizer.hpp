#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kge {

class ConceptDictionary;

using TokenId = std::int32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kClsId = 2;
inline constexpr TokenId kSepId = 3;
inline constexpr std::string_view kContinuation = "##";

class Vocab {
 public:
  // Only the four reserved tokens.
  Vocab();

  static Vocab load(const std::filesystem::path& path);
  static Vocab parse(std::string_view contents);
  static Vocab from_tokens(const std::vector<std::string>& tokens);

  std::size_t size() const { return tokens_.size(); }
  // kUnkId when absent.
  TokenId id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(const std::filesystem::path& path) const;

 private:
  void add(std::string token, std::size_t line_no);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

struct TokenSequence {
  std::vector<TokenId> ids;
  std::vector<std::uint8_t> mask;

  // Number of non-pad positions ([CLS] .. [SEP]).
  std::size_t length() const;
  bool operator==(const TokenSequence&) const = default;
};

// Lowercase, split on whitespace/punctuation, greedy longest-match
// segmentation with "##" continuations, [CLS]/[SEP] wrap, truncation and
// padding to max_len.
TokenSequence tokenize(std::string_view surface, const Vocab& vocab, std::size_t max_len);

// Inverse of segmentation for in-vocabulary words: strips "##" and joins
// pieces of a word, words separated by single spaces.
std::string detokenize(const TokenSequence& seq, const Vocab& vocab);

// Builds a vocabulary from the dictionary's surfaces: every single character
// (both word-initial and "##" forms), then character n-grams ranked by
// frequency, until max_size tokens (including reserved ones).
Vocab build_vocab(const ConceptDictionary& dict, std::size_t max_size, std::size_t max_ngram = 16);

}  // namespace kge
