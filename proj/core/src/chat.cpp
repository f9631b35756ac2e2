// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#include "lorascore/chat.hpp"

#include "lorascore/error.hpp"

namespace lorascore::glm {
namespace {

void check(const ChatPrompt& prompt) {
  if (prompt.turns.empty()) throw ValidationError("chat prompt has no turns");
  for (std::size_t i = 0; i < prompt.turns.size(); ++i) {
    if (prompt.turns[i].text.empty()) {
      throw ValidationError("chat turn " + std::to_string(i) + " has empty text");
    }
  }
}

TokenId marker(Role r) { return r == Role::kUser ? kUserId : kAssistantId; }
const char* marker_text(Role r) { return r == Role::kUser ? "<|user|>" : "<|assistant|>"; }

std::string grading_request(int floor, const GradingFields& f) {
  return "You are a grading assistant. Assign a **Score** between " + std::to_string(floor) +
         " and " + std::to_string(f.max_score) +
         " using the **Rubric** provided to a **Student Response**\n\n**Rubric**\n" + f.rubric +
         "\n\n**Student Response**\n" + f.response;
}

}  // namespace

std::vector<TokenId> render_chat(const ChatPrompt& prompt, const Tokenizer& tokenizer,
                                 bool add_generation_prefix) {
  check(prompt);
  std::vector<TokenId> ids;
  for (const auto& turn : prompt.turns) {
    ids.push_back(marker(turn.role));
    const auto body = tokenizer.encode(turn.text);
    ids.insert(ids.end(), body.begin(), body.end());
    ids.push_back(kEndId);
  }
  if (add_generation_prefix) ids.push_back(kAssistantId);
  return ids;
}

std::vector<TokenId> render_chat(const ChatPrompt& prompt, const Tokenizer& tokenizer,
                                 std::string_view assistant_prefix) {
  auto ids = render_chat(prompt, tokenizer, true);
  const auto tail = tokenizer.encode(assistant_prefix);
  ids.insert(ids.end(), tail.begin(), tail.end());
  return ids;
}

std::string render_chat_text(const ChatPrompt& prompt, bool add_generation_prefix) {
  check(prompt);
  std::string out;
  for (const auto& turn : prompt.turns) {
    out += marker_text(turn.role);
    out += turn.text;
    out += "<|end|>";
  }
  if (add_generation_prefix) out += "<|assistant|>";
  return out;
}

std::string score_request_text(const GradingFields& f) { return grading_request(0, f); }

std::string feedback_request_text(const GradingFields& f) {
  return grading_request(f.min_score, f);
}

std::string explain_instruction(int predicted) {
  return "Using the rubric, specify why you gave the response a score of " +
         std::to_string(predicted) + ".";
}

std::string seeded_feedback_prefix(int predicted) {
  return "The response was given a score of " + std::to_string(predicted) + " because";
}

ChatPrompt score_prompt(const GradingFields& f) {
  return ChatPrompt{{ChatTurn{Role::kUser, score_request_text(f)}}};
}

ChatPrompt feedback_prompt(const GradingFields& f, int predicted) {
  return ChatPrompt{{ChatTurn{Role::kUser, feedback_request_text(f)},
                     ChatTurn{Role::kAssistant, std::string(kScorePrefix) + std::to_string(predicted)},
                     ChatTurn{Role::kUser, explain_instruction(predicted)}}};
}

}  // namespace lorascore::glm
