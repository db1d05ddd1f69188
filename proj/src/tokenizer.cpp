// SPDX-License-Identifier: Apache-2.0
#include "kgr/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>

#include "kgr/error.hpp"

namespace kgr {
namespace {

constexpr std::array<std::string_view, Tokenizer::kNumSpecial> kSpecials = {
    "<pad>", "<unk>", "<s>", "</s>", "[INST]", "[/INST]", "<feats>", "</feats>"};

}  // namespace

std::vector<std::string> Tokenizer::split(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) words.push_back(std::move(current));
    current.clear();
  };
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      words.emplace_back(1, raw);
    } else {
      current += static_cast<char>(std::tolower(c));
    }
  }
  flush();
  return words;
}

std::string Tokenizer::normalize(std::string_view text) {
  std::string out;
  for (const auto& w : split(text)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

Tokenizer Tokenizer::build(std::span<const std::string> corpus) {
  std::set<std::string> words;
  for (const auto& text : corpus)
    for (auto& w : split(text)) words.insert(std::move(w));
  std::vector<std::string> tokens(kSpecials.begin(), kSpecials.end());
  tokens.insert(tokens.end(), words.begin(), words.end());
  return from_vocabulary(std::move(tokens));
}

Tokenizer Tokenizer::from_vocabulary(std::vector<std::string> tokens) {
  if (tokens.size() < kNumSpecial || !std::equal(kSpecials.begin(), kSpecials.end(), tokens.begin())) {
    throw FormatError("tokenizer vocabulary must start with the special tokens");
  }
  Tokenizer t;
  t.tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < t.tokens_.size(); ++i) {
    if (!t.index_.emplace(t.tokens_[i], static_cast<TokenId>(i)).second) {
      throw FormatError("tokenizer vocabulary repeats '" + t.tokens_[i] + "'");
    }
  }
  return t;
}

std::vector<TokenId> Tokenizer::encode(std::string_view text, std::size_t* unknown_count) const {
  std::vector<TokenId> ids;
  std::size_t unknown = 0;
  for (const auto& w : split(text)) {
    auto it = index_.find(w);
    if (it == index_.end() || it->second < static_cast<TokenId>(kNumSpecial)) {
      ids.push_back(kUnk);
      ++unknown;
    } else {
      ids.push_back(it->second);
    }
  }
  if (unknown_count != nullptr) *unknown_count = unknown;
  return ids;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id == kPad || id == kBos || id == kEos) continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

std::optional<TokenId> Tokenizer::id_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

}  // namespace kgr
