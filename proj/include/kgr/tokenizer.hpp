// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kgr {

using TokenId = std::int64_t;

/// Lowercasing word/punctuation tokenizer over a closed vocabulary.
///
/// Special tokens occupy the first ids. Their surface forms contain
/// punctuation, so splitting corpus text can never reproduce them.
class Tokenizer {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kBos = 2;
  static constexpr TokenId kEos = 3;
  static constexpr TokenId kInst = 4;
  static constexpr TokenId kInstEnd = 5;
  static constexpr TokenId kFeats = 6;
  static constexpr TokenId kFeatsEnd = 7;
  static constexpr std::size_t kNumSpecial = 8;

  /// Vocabulary = specials followed by the sorted distinct words of `corpus`.
  static Tokenizer build(std::span<const std::string> corpus);
  /// Restores a tokenizer from the full ordered token list (specials first).
  static Tokenizer from_vocabulary(std::vector<std::string> tokens);

  /// Lowercases, separates punctuation characters and splits on whitespace.
  static std::vector<std::string> split(std::string_view text);
  /// Space-joined split(text).
  static std::string normalize(std::string_view text);

  std::vector<TokenId> encode(std::string_view text, std::size_t* unknown_count = nullptr) const;
  /// Space-joined words; pad/bos/eos are dropped.
  std::string decode(std::span<const TokenId> ids) const;

  std::optional<TokenId> id_of(std::string_view token) const;
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& vocabulary() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace kgr
