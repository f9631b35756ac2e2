// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#include "lorascore/scoring.hpp"

#include <charconv>
#include <nlohmann/json.hpp>

#include "lorascore/error.hpp"
#include "lorascore/tsv.hpp"

namespace lorascore::scoring {

ScoreResult parse_score_token(std::string_view raw, const data::ItemSpec& item) {
  ScoreResult r;
  r.raw_token = std::string(raw);
  std::string_view digits = raw;
  if (!digits.empty() && digits.front() == '-') digits.remove_prefix(1);
  const bool integer = !digits.empty() && digits.find_first_not_of("0123456789") == std::string_view::npos;
  int value = 0;
  if (integer) {
    const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), value);
    // Too large for int: treated like any other unusable token.
    if (ec != std::errc() || ptr != raw.data() + raw.size()) r.fallback_used = true;
  } else {
    r.fallback_used = true;
  }
  if (r.fallback_used) {
    r.predicted = 0;
    return r;
  }
  r.predicted = value;
  r.out_of_range = value < item.min_score || value > item.max_score;
  return r;
}

glm::GradingFields grading_fields(const data::ItemSpec& item, std::string_view response) {
  return {item.min_score, item.max_score, item.rubric_text, std::string(response)};
}

std::vector<glm::TokenId> score_prompt_ids(const glm::Tokenizer& tok, const data::ItemSpec& item,
                                           std::string_view response) {
  return glm::render_chat(glm::score_prompt(grading_fields(item, response)), tok, glm::kScorePrefix);
}

ScoreResult predict_score(const glm::Model& model, const glm::Tokenizer& tok,
                          const data::ItemSpec& item, std::string_view response) {
  const auto ids = score_prompt_ids(tok, item, response);
  glm::GenerateOptions opts;
  opts.max_new_tokens = 1;
  opts.stop_tokens.clear();
  const auto gen = model.generate(ids, opts);
  return parse_score_token(tok.token_string(gen.tokens.at(0)), item);
}

std::size_t feedback_cap(data::ItemKind kind) {
  return kind == data::ItemKind::kEssay ? kEssayFeedbackCap : kShortAnswerFeedbackCap;
}

std::vector<glm::TokenId> feedback_prompt_ids(const glm::Tokenizer& tok, const data::ItemSpec& item,
                                              std::string_view response, int predicted) {
  const auto prompt = glm::feedback_prompt(grading_fields(item, response), predicted);
  if (item.kind == data::ItemKind::kShortAnswer) {
    return glm::render_chat(prompt, tok, glm::seeded_feedback_prefix(predicted));
  }
  return glm::render_chat(prompt, tok, true);
}

FeedbackResult generate_feedback(const glm::Model& model, const glm::Tokenizer& tok,
                                 const data::ItemSpec& item, std::string_view response, int predicted,
                                 const FeedbackOptions& options) {
  const auto ids = feedback_prompt_ids(tok, item, response, predicted);
  glm::GenerateOptions opts;
  opts.max_new_tokens = feedback_cap(item.kind);
  if (options.max_new_tokens) {
    if (*options.max_new_tokens == 0) throw ValidationError("feedback token limit must be >= 1");
    opts.max_new_tokens = std::min(opts.max_new_tokens, *options.max_new_tokens);
  }
  opts.mode = options.mode;
  opts.temperature = options.temperature;
  opts.seed = options.seed;
  opts.stop_tokens = {glm::kEosId, glm::kEndId};
  const auto gen = model.generate(ids, opts);

  FeedbackResult r;
  r.item_kind = item.kind;
  r.new_token_count = gen.tokens.size();
  r.stop = gen.stop;
  if (item.kind == data::ItemKind::kShortAnswer) r.text = glm::seeded_feedback_prefix(predicted);
  r.text += tok.decode_text(gen.tokens);
  return r;
}

std::vector<BatchRow> batch_score(const glm::Model& model, const glm::Tokenizer& tok,
                                  const data::ItemSpec& item,
                                  std::span<const data::ScoredResponse> responses) {
  std::vector<BatchRow> rows;
  rows.reserve(responses.size());
  for (const auto& r : responses) {
    BatchRow row;
    row.id = r.id;
    try {
      row.result = predict_score(model, tok, item, r.text);
    } catch (const Error& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_predictions(std::span<const BatchRow> rows) {
  std::string out = "id\tpredicted\traw_token\tfallback_used\tout_of_range\terror\n";
  for (const auto& row : rows) {
    if (row.result) {
      const auto& s = *row.result;
      out += tsv::join({tsv::escape(row.id), std::to_string(s.predicted), tsv::escape(s.raw_token),
                        s.fallback_used ? "1" : "0", s.out_of_range ? "1" : "0", ""});
    } else {
      out += tsv::join({tsv::escape(row.id), "", "", "", "", tsv::escape(row.error)});
    }
    out += '\n';
  }
  return out;
}

std::vector<PredictionRecord> parse_predictions(std::string_view text) {
  const auto rows = tsv::lines(text);
  const std::vector<std::string> header = {"id",           "predicted", "raw_token", "fallback_used",
                                           "out_of_range", "error"};
  if (rows.empty() || tsv::split(rows[0]) != header) {
    throw ParseError(1, "predictions header must be: id, predicted, raw_token, fallback_used, "
                        "out_of_range, error");
  }
  std::vector<PredictionRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].empty()) continue;
    const auto f = tsv::split(rows[i]);
    if (f.size() != header.size()) throw ParseError(i + 1, "expected 6 fields");
    PredictionRecord p;
    p.id = tsv::unescape(f[0]);
    if (!f[1].empty()) {
      int v = 0;
      const auto [ptr, ec] = std::from_chars(f[1].data(), f[1].data() + f[1].size(), v);
      if (ec != std::errc() || ptr != f[1].data() + f[1].size()) {
        throw ParseError(i + 1, "predicted is not an integer");
      }
      p.predicted = v;
    }
    p.raw_token = tsv::unescape(f[2]);
    p.fallback_used = f[3] == "1";
    p.out_of_range = f[4] == "1";
    p.error = tsv::unescape(f[5]);
    out.push_back(std::move(p));
  }
  return out;
}

std::string feedback_json_line(std::string_view id, std::string_view item, int predicted,
                               const FeedbackResult& feedback) {
  nlohmann::ordered_json j;
  j["id"] = id;
  j["item"] = item;
  j["predicted"] = predicted;
  // Byte tokens can split multibyte characters; replace rather than fail.
  j["feedback"] = feedback.text;
  j["token_count"] = feedback.new_token_count;
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

}  // namespace lorascore::scoring
