// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lorascore::glm {

using TokenId = std::int32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kBosId = 1;
inline constexpr TokenId kEosId = 2;
inline constexpr TokenId kUserId = 3;
inline constexpr TokenId kAssistantId = 4;
inline constexpr TokenId kEndId = 5;
inline constexpr int kMaxScoreToken = 60;

// Word-level tokenizer. Text is split into pieces (letter runs with an
// optional leading space, digit runs, runs of one punctuation character,
// whitespace runs); pieces outside the vocabulary fall back to single-byte
// tokens, so every byte string round-trips. Integers 0..60 are whole tokens.
class Tokenizer {
 public:
  // Specials, all 256 single bytes and the score tokens, then the most
  // frequent corpus pieces (ties broken lexicographically) up to vocab_size.
  static Tokenizer build(std::span<const std::string> corpus, std::size_t vocab_size);
  static std::size_t reserved_size();

  static std::vector<std::string> pretokenize(std::string_view text);

  // Plain text; special markers in the input are treated as ordinary text.
  std::vector<TokenId> encode(std::string_view text) const;
  // Specials render as their marker strings ("<|user|>", ...).
  std::string decode(std::span<const TokenId> ids) const;
  // Like decode, but drops special tokens.
  std::string decode_text(std::span<const TokenId> ids) const;

  const std::string& token_string(TokenId id) const;
  bool is_special(TokenId id) const { return id >= 0 && id <= kEndId; }
  TokenId score_token(int score) const;
  // The integer a score token stands for, if it is one.
  std::optional<int> score_value(TokenId id) const;
  std::optional<TokenId> find(std::string_view piece) const;

  std::size_t size() const { return tokens_.size(); }

  std::string to_json() const;
  static Tokenizer from_json(std::string_view json);
  void save(const std::string& path) const;
  static Tokenizer load(const std::string& path);

  bool operator==(const Tokenizer& other) const { return tokens_ == other.tokens_; }

 private:
  void add(std::string token);
  void append_piece(std::string_view piece, std::vector<TokenId>& out) const;

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;  // non-special tokens only
};

}  // namespace lorascore::glm
