// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lorascore/chat.hpp"
#include "lorascore/data.hpp"
#include "lorascore/model.hpp"
#include "lorascore/tokenizer.hpp"

namespace lorascore::scoring {

struct ScoreResult {
  int predicted = 0;
  std::string raw_token;
  bool fallback_used = false;  // raw token was not an integer; predicted is 0
  bool out_of_range = false;   // integer outside the item range, reported as-is

  bool operator==(const ScoreResult&) const = default;
};

// Integers match -?[0-9]+ exactly; anything else becomes 0 with the fallback flag.
ScoreResult parse_score_token(std::string_view raw, const data::ItemSpec& item);

glm::GradingFields grading_fields(const data::ItemSpec& item, std::string_view response);
std::vector<glm::TokenId> score_prompt_ids(const glm::Tokenizer& tok, const data::ItemSpec& item,
                                           std::string_view response);

// One greedily decoded token after the "Score: " prefix. Prompts longer than
// the context raise ContextOverflowError.
ScoreResult predict_score(const glm::Model& model, const glm::Tokenizer& tok,
                          const data::ItemSpec& item, std::string_view response);

inline constexpr std::size_t kEssayFeedbackCap = 256;
inline constexpr std::size_t kShortAnswerFeedbackCap = 128;
std::size_t feedback_cap(data::ItemKind kind);

struct FeedbackResult {
  std::string text;
  std::size_t new_token_count = 0;  // generated tokens, including a final stop token
  data::ItemKind item_kind = data::ItemKind::kShortAnswer;
  glm::StopReason stop = glm::StopReason::kMaxTokens;
};

struct FeedbackOptions {
  glm::DecodeMode mode = glm::DecodeMode::kGreedy;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  // Lowers the per-kind cap; never raises it.
  std::optional<std::size_t> max_new_tokens;
};

std::vector<glm::TokenId> feedback_prompt_ids(const glm::Tokenizer& tok, const data::ItemSpec& item,
                                              std::string_view response, int predicted);

// Short answers are seeded with the fixed explanation opener, which also
// starts the returned text. Generation stops at <|eos|> or <|end|>.
FeedbackResult generate_feedback(const glm::Model& model, const glm::Tokenizer& tok,
                                 const data::ItemSpec& item, std::string_view response, int predicted,
                                 const FeedbackOptions& options = {});

struct BatchRow {
  std::string id;
  std::optional<ScoreResult> result;
  std::string error;  // set when scoring this row failed
};

// Order preserving; per-row failures land in BatchRow::error.
std::vector<BatchRow> batch_score(const glm::Model& model, const glm::Tokenizer& tok,
                                  const data::ItemSpec& item,
                                  std::span<const data::ScoredResponse> responses);

// Columns: id, predicted, raw_token, fallback_used, out_of_range, error.
std::string format_predictions(std::span<const BatchRow> rows);

struct PredictionRecord {
  std::string id;
  std::optional<int> predicted;
  std::string raw_token;
  bool fallback_used = false;
  bool out_of_range = false;
  std::string error;
};
std::vector<PredictionRecord> parse_predictions(std::string_view text);

// One JSON object: id, item, predicted, feedback, token_count.
std::string feedback_json_line(std::string_view id, std::string_view item, int predicted,
                               const FeedbackResult& feedback);

}  // namespace lorascore::scoring
