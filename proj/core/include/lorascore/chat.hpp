// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "lorascore/tokenizer.hpp"

namespace lorascore::glm {

enum class Role { kUser, kAssistant };

struct ChatTurn {
  Role role = Role::kUser;
  std::string text;
};

struct ChatPrompt {
  std::vector<ChatTurn> turns;
};

// Each turn renders as <marker> text <|end|>; with the generation prefix the
// stream ends with an open <|assistant|> marker. Turn text never produces
// special ids, which keeps the rendering injective.
std::vector<TokenId> render_chat(const ChatPrompt& prompt, const Tokenizer& tokenizer,
                                 bool add_generation_prefix);
// render_chat with the prefix, followed by the start of the assistant reply.
std::vector<TokenId> render_chat(const ChatPrompt& prompt, const Tokenizer& tokenizer,
                                 std::string_view assistant_prefix);
std::string render_chat_text(const ChatPrompt& prompt, bool add_generation_prefix);

// Grading templates.
struct GradingFields {
  int min_score = 0;
  int max_score = 0;
  std::string rubric;
  std::string response;
};

inline constexpr std::string_view kScorePrefix = "Score: ";

// User turn asking for a score; the lower bound is printed as 0 whatever the item's floor.
std::string score_request_text(const GradingFields& fields);
// Same request with the item's real floor, as used by the feedback prompt.
std::string feedback_request_text(const GradingFields& fields);
std::string explain_instruction(int predicted);
// Seed for short-answer feedback: "The response was given a score of {s} because".
std::string seeded_feedback_prefix(int predicted);

// Prompt whose reply is the score token; render with kScorePrefix.
ChatPrompt score_prompt(const GradingFields& fields);
// Request, "Score: {s}" reply and the explanation instruction.
ChatPrompt feedback_prompt(const GradingFields& fields, int predicted);

}  // namespace lorascore::glm
