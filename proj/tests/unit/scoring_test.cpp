// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <nlohmann/json.hpp>

#include "lorascore/error.hpp"
#include "lorascore/finetune.hpp"
#include "lorascore/scoring.hpp"

namespace sc = lorascore::scoring;
namespace ft = lorascore::finetune;
namespace glm = lorascore::glm;
namespace data = lorascore::data;

namespace {

data::ItemSpec essay_item() {
  data::ItemSpec s;
  s.id = "essay";
  s.kind = data::ItemKind::kEssay;
  s.min_score = 2;
  s.max_score = 12;
  s.rater_min = 1;
  s.rater_max = 6;
  s.rule = data::ResolvedRule::kSumOfRaters;
  s.rubric_text = "Score the persuasive letter on ideas, organization and conventions.";
  return s;
}

struct Fixture {
  data::ItemSpec item = ft::keyword_item();
  data::ItemSpec essay = essay_item();
  std::vector<data::ScoredResponse> responses = ft::keyword_responses(16, 21);
  glm::Tokenizer tok;

  Fixture() {
    auto corpus = ft::tokenizer_corpus(item, responses);
    const auto more = ft::tokenizer_corpus(essay, {});
    corpus.insert(corpus.end(), more.begin(), more.end());
    tok = glm::Tokenizer::build(corpus, 480);
  }

  glm::Model model(std::uint64_t seed = 1, std::size_t context = 512) const {
    glm::ModelConfig c;
    c.n_layers = 1;
    c.hidden_size = 24;
    c.intermediate_size = 48;
    c.n_heads = 2;
    c.max_context = context;
    c.vocab_size = tok.size();
    return glm::Model::random(c, seed);
  }
};

// Fits adapters so every given prompt is followed by target.
void train_constant(glm::Model& m, const std::vector<std::vector<glm::TokenId>>& prompts, glm::TokenId target) {
  lorascore::Rng rng(2);
  m.attach_adapters(4, 8, rng);
  ft::AdapterOptimizer opt(m, lorascore::quant::MomentStorage::kFloat32);
  std::vector<ft::TrainingExample> examples;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    examples.push_back(ft::build_example_with_target(std::to_string(i), prompts[i], target));
  }
  for (int epoch = 0; epoch < 40; ++epoch) {
    for (const auto& ex : examples) opt.step(m, ex, 1e-2);
  }
}

}  // namespace

TEST(ParseScore, Integers) {
  const auto item = ft::keyword_item();
  EXPECT_EQ(sc::parse_score_token("3", item), (sc::ScoreResult{3, "3", false, false}));
  EXPECT_EQ(sc::parse_score_token("0", item), (sc::ScoreResult{0, "0", false, false}));
  EXPECT_EQ(sc::parse_score_token("7", item), (sc::ScoreResult{7, "7", false, true}));
  EXPECT_EQ(sc::parse_score_token("-1", item), (sc::ScoreResult{-1, "-1", false, true}));
}

TEST(ParseScore, NonIntegersFallBackToZero) {
  const auto item = ft::keyword_item();
  for (const std::string raw : {"the", "", " 3", "3 ", "+3", "3.0", "3a", "-", "--1", "\n", "<|eos|>", "99999999999999"}) {
    const auto r = sc::parse_score_token(raw, item);
    EXPECT_TRUE(r.fallback_used) << "'" << raw << "'";
    EXPECT_EQ(r.predicted, 0) << "'" << raw << "'";
    EXPECT_EQ(r.raw_token, raw);
    EXPECT_FALSE(r.out_of_range);
  }
}

TEST(PredictScore, OneTokenAndFallbackBiconditional) {
  Fixture f;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto m = f.model(seed);
    for (const auto& r : f.responses) {
      const auto s = sc::predict_score(m, f.tok, f.item, r.text);
      const auto ids = sc::score_prompt_ids(f.tok, f.item, r.text);
      glm::GenerateOptions o;
      o.stop_tokens.clear();
      const auto g = m.generate(ids, o);
      ASSERT_EQ(g.tokens.size(), 1U);
      EXPECT_EQ(s.raw_token, f.tok.token_string(g.tokens[0]));
      const bool integer = f.tok.score_value(g.tokens[0]).has_value();
      EXPECT_EQ(s.fallback_used, !integer);
      if (s.fallback_used) {
        EXPECT_EQ(s.predicted, 0);
      }
    }
  }
}

TEST(PredictScore, ConstantTwoModelPredictsTwo) {
  Fixture f;
  auto m = f.model();
  std::vector<std::vector<glm::TokenId>> prompts;
  for (std::size_t i = 0; i < 8; ++i) prompts.push_back(sc::score_prompt_ids(f.tok, f.item, f.responses[i].text));
  train_constant(m, prompts, f.tok.score_token(2));
  for (const auto& r : ft::keyword_responses(10, 99, {}, "fresh")) {
    const auto s = sc::predict_score(m, f.tok, f.item, r.text);
    EXPECT_EQ(s.predicted, 2) << r.text;
    EXPECT_FALSE(s.fallback_used);
  }
}

TEST(PredictScore, ContextOverflowIsAnError) {
  Fixture f;
  const auto m = f.model(1, 64);
  EXPECT_THROW(sc::predict_score(m, f.tok, f.item, f.responses[0].text), lorascore::ContextOverflowError);
}

TEST(Feedback, CapsAndPrefix) {
  Fixture f;
  EXPECT_EQ(sc::feedback_cap(data::ItemKind::kEssay), 256U);
  EXPECT_EQ(sc::feedback_cap(data::ItemKind::kShortAnswer), 128U);
  const auto m = f.model(3, 1024);
  for (int s = 0; s <= 3; ++s) {
    sc::FeedbackOptions o;
    o.mode = glm::DecodeMode::kSample;
    o.seed = static_cast<std::uint64_t>(s);
    const auto fb = sc::generate_feedback(m, f.tok, f.item, f.responses[0].text, s, o);
    EXPECT_LE(fb.new_token_count, 128U);
    EXPECT_TRUE(fb.text.starts_with(glm::seeded_feedback_prefix(s))) << fb.text;
    EXPECT_TRUE(fb.text.starts_with("The response was given a score of " + std::to_string(s) + " because"));
    const auto e = sc::generate_feedback(m, f.tok, f.essay, f.responses[0].text, s + 2, o);
    EXPECT_LE(e.new_token_count, 256U);
    EXPECT_EQ(e.item_kind, data::ItemKind::kEssay);
  }
  sc::FeedbackOptions lower;
  lower.max_new_tokens = 5;
  EXPECT_LE(sc::generate_feedback(m, f.tok, f.essay, "x", 4, lower).new_token_count, 5U);
  lower.max_new_tokens = 10000;  // never raises the cap
  EXPECT_LE(sc::generate_feedback(m, f.tok, f.item, "x", 1, lower).new_token_count, 128U);
}

TEST(Feedback, ImmediateEosGivesPrefixOrNothing) {
  Fixture f;
  auto m = f.model();
  const std::string response = f.responses[0].text;
  train_constant(m,
                 {sc::feedback_prompt_ids(f.tok, f.item, response, 1),
                  sc::feedback_prompt_ids(f.tok, f.essay, response, 5)},
                 glm::kEosId);
  const auto sa = sc::generate_feedback(m, f.tok, f.item, response, 1);
  EXPECT_EQ(sa.text, "The response was given a score of 1 because");
  EXPECT_EQ(sa.new_token_count, 1U);
  EXPECT_EQ(sa.stop, glm::StopReason::kStopToken);
  const auto es = sc::generate_feedback(m, f.tok, f.essay, response, 5);
  EXPECT_EQ(es.text, "");
  EXPECT_EQ(es.new_token_count, 1U);
}

TEST(Feedback, ScorePromptIsTheStartOfTheFeedbackPrompt) {
  Fixture f;
  for (const auto& item : {f.item, f.essay}) {
    // Identical once the floor is zero; the two templates differ only in the printed floor.
    auto zero_floor = item;
    zero_floor.min_score = 0;
    const auto fields = sc::grading_fields(zero_floor, f.responses[2].text);
    const std::string score = glm::render_chat_text(glm::score_prompt(fields), true) + std::string(glm::kScorePrefix);
    const std::string feedback = glm::render_chat_text(glm::feedback_prompt(fields, 2), false);
    EXPECT_TRUE(feedback.starts_with(score)) << item.id;
  }
  // With a nonzero floor the score request still prints 0.
  const auto fields = sc::grading_fields(f.essay, "r");
  EXPECT_NE(glm::score_request_text(fields).find("between 0 and 12"), std::string::npos);
  EXPECT_NE(glm::feedback_request_text(fields).find("between 2 and 12"), std::string::npos);
}

TEST(Feedback, JsonLine) {
  sc::FeedbackResult fb;
  fb.text = "The response was given a score of 2 because \"quoted\"\n";
  fb.new_token_count = 7;
  const auto line = sc::feedback_json_line("r-1", "sas1", 2, fb);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  const auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j["id"], "r-1");
  EXPECT_EQ(j["item"], "sas1");
  EXPECT_EQ(j["predicted"], 2);
  EXPECT_EQ(j["feedback"], fb.text);
  EXPECT_EQ(j["token_count"], 7);
}

TEST(BatchScore, EmptyInputGivesHeaderOnly) {
  Fixture f;
  const auto m = f.model();
  const auto rows = sc::batch_score(m, f.tok, f.item, {});
  EXPECT_TRUE(rows.empty());
  EXPECT_EQ(sc::format_predictions(rows), "id\tpredicted\traw_token\tfallback_used\tout_of_range\terror\n");
  EXPECT_TRUE(sc::parse_predictions(sc::format_predictions(rows)).empty());
}

TEST(BatchScore, OrderPreservingAndDeterministic) {
  Fixture f;
  const auto m = f.model(4);
  auto rs = f.responses;
  const auto a = sc::batch_score(m, f.tok, f.item, rs);
  EXPECT_EQ(sc::format_predictions(a), sc::format_predictions(sc::batch_score(m, f.tok, f.item, rs)));
  auto reversed = rs;
  std::reverse(reversed.begin(), reversed.end());
  const auto b = sc::batch_score(m, f.tok, f.item, reversed);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[a.size() - 1 - i].id);
    EXPECT_EQ(a[i].result, b[a.size() - 1 - i].result);
  }
}

TEST(BatchScore, RowErrorsDoNotAbortTheBatch) {
  Fixture f;
  const auto m = f.model(1, 160);
  auto rs = f.responses;
  rs.resize(3);
  for (int i = 0; i < 200; ++i) rs[1].text += " water";
  const auto rows = sc::batch_score(m, f.tok, f.item, rs);
  ASSERT_EQ(rows.size(), 3U);
  EXPECT_TRUE(rows[0].result.has_value());
  EXPECT_FALSE(rows[1].result.has_value());
  EXPECT_FALSE(rows[1].error.empty());
  EXPECT_TRUE(rows[2].result.has_value());

  const auto back = sc::parse_predictions(sc::format_predictions(rows));
  ASSERT_EQ(back.size(), 3U);
  EXPECT_EQ(back[0].predicted, rows[0].result->predicted);
  EXPECT_EQ(back[0].raw_token, rows[0].result->raw_token);
  EXPECT_EQ(back[0].fallback_used, rows[0].result->fallback_used);
  EXPECT_FALSE(back[1].predicted.has_value());
  EXPECT_EQ(back[1].error, rows[1].error);
}
