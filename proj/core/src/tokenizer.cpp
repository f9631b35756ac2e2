// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#include "lorascore/tokenizer.hpp"

#include <algorithm>
#include <map>
#include <nlohmann/json.hpp>

#include "lorascore/error.hpp"
#include "lorascore/serialize.hpp"

namespace lorascore::glm {
namespace {

constexpr const char* kSpecialStrings[] = {"<|pad|>",       "<|bos|>", "<|eos|>",
                                           "<|user|>", "<|assistant|>", "<|end|>"};
constexpr int kFormatVersion = 1;

enum class CharClass { kLetter, kDigit, kSpace, kOtherSpace, kPunct };

CharClass classify(unsigned char c) {
  if (c >= 0x80 || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) return CharClass::kLetter;
  if (c >= '0' && c <= '9') return CharClass::kDigit;
  if (c == ' ') return CharClass::kSpace;
  if (c == '\n' || c == '\t' || c == '\r' || c == '\f' || c == '\v') return CharClass::kOtherSpace;
  return CharClass::kPunct;
}

bool is_space(CharClass c) { return c == CharClass::kSpace || c == CharClass::kOtherSpace; }

bool attaches_space(CharClass c) { return c == CharClass::kLetter || c == CharClass::kPunct; }

}  // namespace

std::vector<std::string> Tokenizer::pretokenize(std::string_view text) {
  std::vector<std::string> pieces;
  const std::size_t n = text.size();
  auto cls = [&](std::size_t i) { return classify(static_cast<unsigned char>(text[i])); };
  std::size_t i = 0;
  while (i < n) {
    const std::size_t start = i;
    CharClass c = cls(i);
    if (c == CharClass::kSpace && i + 1 < n && attaches_space(cls(i + 1))) {
      ++i;
      c = cls(i);
    }
    if (c == CharClass::kLetter) {
      while (i < n && cls(i) == CharClass::kLetter) ++i;
    } else if (c == CharClass::kDigit) {
      while (i < n && cls(i) == CharClass::kDigit) ++i;
    } else if (c == CharClass::kPunct) {
      const char p = text[i];
      while (i < n && text[i] == p) ++i;
    } else {
      // Whitespace run; a final space that can attach to the next piece is left for it.
      while (i < n && is_space(cls(i))) ++i;
      if (i < n && i - start > 1 && text[i - 1] == ' ' && attaches_space(cls(i))) --i;
    }
    pieces.emplace_back(text.substr(start, i - start));
  }
  return pieces;
}

std::size_t Tokenizer::reserved_size() { return 6 + 256 + 51; }  // "0".."9" are bytes already

void Tokenizer::add(std::string token) {
  const auto id = static_cast<TokenId>(tokens_.size());
  if (id > kEndId) {
    if (index_.count(token)) throw ValidationError("duplicate token '" + token + "'");
    index_.emplace(token, id);
  }
  tokens_.push_back(std::move(token));
}

Tokenizer Tokenizer::build(std::span<const std::string> corpus, std::size_t vocab_size) {
  Tokenizer t;
  for (const char* s : kSpecialStrings) t.add(s);
  for (int b = 0; b < 256; ++b) t.add(std::string(1, static_cast<char>(b)));
  for (int s = 10; s <= kMaxScoreToken; ++s) t.add(std::to_string(s));

  std::map<std::string, std::size_t> counts;
  for (const auto& text : corpus) {
    for (auto& p : pretokenize(text)) ++counts[std::move(p)];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [piece, count] : counts) {
    if (!t.index_.count(piece)) ranked.emplace_back(piece, count);
  }
  // std::map iteration is lexicographic, so a stable sort keeps that as the tie-break.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (auto& [piece, count] : ranked) {
    if (t.tokens_.size() >= vocab_size) break;
    t.add(piece);
  }
  return t;
}

void Tokenizer::append_piece(std::string_view piece, std::vector<TokenId>& out) const {
  if (auto it = index_.find(std::string(piece)); it != index_.end()) {
    out.push_back(it->second);
    return;
  }
  if (piece.size() > 1 && piece.front() == ' ') {
    if (auto it = index_.find(std::string(piece.substr(1))); it != index_.end()) {
      out.push_back(index_.at(" "));
      out.push_back(it->second);
      return;
    }
  }
  for (const char c : piece) out.push_back(index_.at(std::string(1, c)));
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const {
  std::vector<TokenId> out;
  for (const auto& piece : pretokenize(text)) append_piece(piece, out);
  return out;
}

const std::string& Tokenizer::token_string(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " +
                     std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (const TokenId id : ids) out += token_string(id);
  return out;
}

std::string Tokenizer::decode_text(std::span<const TokenId> ids) const {
  std::string out;
  for (const TokenId id : ids) {
    if (!is_special(id)) out += token_string(id);
  }
  return out;
}

TokenId Tokenizer::score_token(int score) const {
  if (score < 0 || score > kMaxScoreToken) {
    throw ValidationError("score " + std::to_string(score) + " has no single-token form");
  }
  return index_.at(std::to_string(score));
}

std::optional<int> Tokenizer::score_value(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size() || is_special(id)) return std::nullopt;
  const std::string& s = tokens_[static_cast<std::size_t>(id)];
  if (s.empty() || s.size() > 2 || (s.size() == 2 && s[0] == '0')) return std::nullopt;
  if (!std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) return std::nullopt;
  const int v = std::stoi(s);
  if (v > kMaxScoreToken) return std::nullopt;
  return v;
}

std::optional<TokenId> Tokenizer::find(std::string_view piece) const {
  if (auto it = index_.find(std::string(piece)); it != index_.end()) return it->second;
  return std::nullopt;
}

std::string Tokenizer::to_json() const {
  nlohmann::json j;
  j["format"] = "lorascore-tokenizer";
  j["version"] = kFormatVersion;
  // Bytes >= 0x80 are not valid UTF-8 on their own, so tokens are stored as byte arrays.
  nlohmann::json toks = nlohmann::json::array();
  for (const auto& t : tokens_) {
    toks.push_back(std::vector<std::uint8_t>(t.begin(), t.end()));
  }
  j["tokens"] = std::move(toks);
  return j.dump();
}

Tokenizer Tokenizer::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("tokenizer file is not valid JSON: ") + e.what());
  }
  if (j.value("format", "") != "lorascore-tokenizer") throw DecodeError("not a tokenizer file");
  if (j.value("version", 0) != kFormatVersion) {
    throw DecodeError("unsupported tokenizer version " + std::to_string(j.value("version", 0)));
  }
  Tokenizer t;
  try {
    for (const auto& tok : j.at("tokens")) {
      const auto bytes = tok.get<std::vector<std::uint8_t>>();
      t.add(std::string(bytes.begin(), bytes.end()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("malformed tokenizer file: ") + e.what());
  }
  if (t.tokens_.size() < reserved_size()) throw DecodeError("tokenizer vocabulary is truncated");
  for (int i = 0; i <= kEndId; ++i) {
    if (t.tokens_[static_cast<std::size_t>(i)] != kSpecialStrings[i]) {
      throw DecodeError("tokenizer special tokens are out of order");
    }
  }
  return t;
}

void Tokenizer::save(const std::string& path) const { io::write_file(path, to_json()); }

Tokenizer Tokenizer::load(const std::string& path) { return from_json(io::read_file(path)); }

}  // namespace lorascore::glm
