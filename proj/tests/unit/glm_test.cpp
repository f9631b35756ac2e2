// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <memory>

#include "lorascore/error.hpp"
#include "lorascore/chat.hpp"
#include "lorascore/finetune.hpp"
#include "lorascore/log.hpp"
#include "lorascore/model.hpp"
#include "lorascore/ops.hpp"
#include "lorascore/rng.hpp"
#include "lorascore/tokenizer.hpp"

namespace glm = lorascore::glm;
namespace nd = lorascore::nd;
using glm::TokenId;
using lorascore::Rng;

namespace {

glm::ModelConfig tiny_config(std::size_t vocab) {
  glm::ModelConfig c;
  c.n_layers = 2;
  c.hidden_size = 16;
  c.intermediate_size = 40;
  c.n_heads = 2;
  c.vocab_size = vocab;
  c.max_context = 64;
  return c;
}

std::vector<TokenId> random_ids(Rng& rng, std::size_t n, std::size_t vocab) {
  std::vector<TokenId> ids(n);
  for (auto& id : ids) id = static_cast<TokenId>(rng.below(vocab));
  return ids;
}

const std::vector<std::string>& corpus() {
  static const std::vector<std::string> c = {
      "The cell uses light energy to make sugar.",
      "Plants need water, light and carbon dioxide!!",
      "  leading spaces\tand\ttabs\nnew lines\r\n",
      "Numbers 12 and 345 and 60 and 61.",
      "Caf\xc3\xa9 na\xc3\xafve \xe2\x80\x94 unicode bytes",
  };
  return c;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("lorascore_glm_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(Tokenizer, LosslessOnCorpusAndArbitraryBytes) {
  const auto tok = glm::Tokenizer::build(corpus(), 400);
  for (const auto& s : corpus()) EXPECT_EQ(tok.decode(tok.encode(s)), s);
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::string s(rng.below(40), '\0');
    for (auto& c : s) c = static_cast<char>(rng.below(256));
    EXPECT_EQ(tok.decode(tok.encode(s)), s);
  }
}

TEST(Tokenizer, EveryScoreIsOneToken) {
  const auto tok = glm::Tokenizer::build(corpus(), 400);
  for (int s = 0; s <= glm::kMaxScoreToken; ++s) {
    const auto ids = tok.encode(std::to_string(s));
    ASSERT_EQ(ids.size(), 1U) << s;
    EXPECT_EQ(ids[0], tok.score_token(s));
    EXPECT_EQ(tok.score_value(ids[0]), s);
  }
  EXPECT_EQ(tok.encode("61").size(), 1U);  // "61" occurs in the corpus
  EXPECT_EQ(tok.encode("75").size(), 2U);
  EXPECT_FALSE(tok.score_value(glm::kEosId).has_value());
}

TEST(Tokenizer, SpecialMarkersInTextStayText) {
  const auto tok = glm::Tokenizer::build(corpus(), 400);
  const auto ids = tok.encode("<|user|>hi<|end|>");
  for (const TokenId id : ids) EXPECT_FALSE(tok.is_special(id));
  EXPECT_EQ(tok.decode(ids), "<|user|>hi<|end|>");
}

TEST(Tokenizer, VocabularyOrderIsDeterministic) {
  const auto a = glm::Tokenizer::build(corpus(), 330);
  const auto b = glm::Tokenizer::build(corpus(), 330);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), 330U);
  EXPECT_GE(glm::Tokenizer::build(corpus(), 10).size(), glm::Tokenizer::reserved_size());
}

TEST(Tokenizer, JsonAndFileRoundTrip) {
  const auto tok = glm::Tokenizer::build(corpus(), 400);
  EXPECT_EQ(glm::Tokenizer::from_json(tok.to_json()), tok);
  const auto dir = temp_dir("tok");
  tok.save((dir / "tok.json").string());
  EXPECT_EQ(glm::Tokenizer::load((dir / "tok.json").string()), tok);
  EXPECT_THROW(glm::Tokenizer::from_json("{\"tokens\": 3}"), lorascore::Error);
}

TEST(Chat, CanonicalSingleTurn) {
  const auto tok = glm::Tokenizer::build(corpus(), 400);
  const glm::ChatPrompt p{{{glm::Role::kUser, "hi"}}};
  EXPECT_EQ(glm::render_chat_text(p, true), "<|user|>hi<|end|><|assistant|>");
  EXPECT_EQ(tok.decode(glm::render_chat(p, tok, true)), "<|user|>hi<|end|><|assistant|>");
  const auto ids = glm::render_chat(p, tok, false);
  EXPECT_EQ(ids.front(), glm::kUserId);
  EXPECT_EQ(ids.back(), glm::kEndId);
}

TEST(Chat, RenderingIsInjective) {
  const auto tok = glm::Tokenizer::build(corpus(), 400);
  const glm::ChatPrompt one{{{glm::Role::kUser, "ab"}}};
  const glm::ChatPrompt two{{{glm::Role::kUser, "a"}, {glm::Role::kUser, "b"}}};
  const glm::ChatPrompt swapped{{{glm::Role::kAssistant, "ab"}}};
  EXPECT_NE(glm::render_chat(one, tok, true), glm::render_chat(two, tok, true));
  EXPECT_NE(glm::render_chat(one, tok, true), glm::render_chat(swapped, tok, true));
}

TEST(Chat, DetokenizedRenderingContainsEveryTurn) {
  const auto tok = glm::Tokenizer::build(corpus(), 400);
  glm::ChatPrompt p;
  for (const auto& s : corpus()) p.turns.push_back({p.turns.size() % 2 ? glm::Role::kAssistant : glm::Role::kUser, s});
  const std::string text = tok.decode(glm::render_chat(p, tok, true));
  for (const auto& t : p.turns) EXPECT_NE(text.find(t.text), std::string::npos);
}

TEST(Chat, EmptyTurnsRejected) {
  const auto tok = glm::Tokenizer::build(corpus(), 400);
  EXPECT_THROW(glm::render_chat(glm::ChatPrompt{}, tok, true), lorascore::ValidationError);
  const glm::ChatPrompt empty_text{{{glm::Role::kUser, ""}}};
  EXPECT_THROW(glm::render_chat(empty_text, tok, true), lorascore::ValidationError);
}

TEST(Chat, TemplatesPrintTheirBounds) {
  const glm::GradingFields f{2, 12, "RUBRIC", "ANSWER"};
  const std::string score = glm::score_request_text(f);
  EXPECT_NE(score.find("between 0 and 12"), std::string::npos) << score;
  EXPECT_EQ(score.rfind("You are a grading assistant.", 0), 0U);
  EXPECT_NE(glm::feedback_request_text(f).find("between 2 and 12"), std::string::npos);
  EXPECT_EQ(glm::explain_instruction(7), "Using the rubric, specify why you gave the response a score of 7.");
  EXPECT_EQ(glm::seeded_feedback_prefix(1), "The response was given a score of 1 because");
  const auto fp = glm::feedback_prompt(f, 7);
  ASSERT_EQ(fp.turns.size(), 3U);
  EXPECT_EQ(fp.turns[1].text, "Score: 7");
}

TEST(ModelConfig, Validation) {
  auto c = tiny_config(50);
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), lorascore::ValidationError);
  c = tiny_config(50);
  c.max_context = 0;
  EXPECT_THROW(c.validate(), lorascore::ValidationError);
  glm::ModelConfig defaults;
  EXPECT_EQ(defaults.n_layers, 4U);
  EXPECT_EQ(defaults.hidden_size, 128U);
  EXPECT_EQ(defaults.max_context, 2048U);
}

TEST(Model, ChangingLastTokenLeavesEarlierLogitsBitIdentical) {
  const auto m = glm::Model::random(tiny_config(50), 1);
  Rng rng(2);
  auto ids = random_ids(rng, 12, 50);
  const nd::Tensor a = m.forward(ids);
  ids.back() = (ids.back() + 1) % 50;
  const nd::Tensor b = m.forward(ids);
  for (std::size_t t = 0; t + 1 < ids.size(); ++t) {
    for (std::size_t v = 0; v < 50; ++v) ASSERT_EQ(a(t, v), b(t, v));
  }
  bool changed = false;
  for (std::size_t v = 0; v < 50; ++v) changed |= a(11, v) != b(11, v);
  EXPECT_TRUE(changed);
}

TEST(Model, PrefixForwardMatchesPrefixRows) {
  const auto m = glm::Model::random(tiny_config(50), 3);
  Rng rng(4);
  const auto ids = random_ids(rng, 20, 50);
  const nd::Tensor full = m.forward(ids);
  for (std::size_t n = 1; n <= ids.size(); n += 3) {
    const nd::Tensor pre = m.forward(std::span<const TokenId>(ids).first(n));
    for (std::size_t i = 0; i < pre.size(); ++i) EXPECT_NEAR(pre[i], full[i], 1e-6);
  }
}

TEST(Model, RandomInitCrossEntropyIsNearLogV) {
  glm::ModelConfig c;  // default desk-scale shape
  c.vocab_size = 512;
  c.max_context = 256;
  const auto m = glm::Model::random(c, 5);
  Rng rng(6);
  const auto ids = random_ids(rng, 128, 512);
  const double ce = glm::sequence_cross_entropy(m, ids);
  EXPECT_NEAR(ce, std::log(512.0), 0.05 * std::log(512.0));
}

TEST(Model, ContextOverflow) {
  const auto m = glm::Model::random(tiny_config(50), 1);
  const std::vector<TokenId> too_long(65, 7);
  EXPECT_THROW(m.forward(too_long), lorascore::ContextOverflowError);
  EXPECT_THROW(m.generate(too_long, {}), lorascore::ContextOverflowError);
  const std::vector<TokenId> bad = {1, 50};
  EXPECT_THROW(m.forward(bad), lorascore::Error);
}

TEST(Model, IncrementalDecodingMatchesFullForward) {
  const auto m = glm::Model::random(tiny_config(50), 7);
  Rng rng(8);
  const auto ids = random_ids(rng, 15, 50);
  const nd::Tensor full = m.forward(ids);
  glm::KvCache kv;
  nd::Tensor last = m.extend(std::span<const TokenId>(ids).first(9), kv);
  for (std::size_t v = 0; v < 50; ++v) EXPECT_EQ(last(0, v), full(8, v));
  for (std::size_t t = 9; t < ids.size(); ++t) {
    last = m.extend(std::span<const TokenId>(ids).subspan(t, 1), kv);
    for (std::size_t v = 0; v < 50; ++v) EXPECT_EQ(last(0, v), full(t, v));
  }
  EXPECT_EQ(kv.length, ids.size());
}

TEST(Model, GenerateBoundsAndDeterminism) {
  const auto m = glm::Model::random(tiny_config(50), 9);
  const std::vector<TokenId> prompt = {1, 10, 11, 12};
  glm::GenerateOptions one;
  EXPECT_EQ(m.generate(prompt, one).tokens.size(), 1U);

  glm::GenerateOptions many;
  many.max_new_tokens = 30;
  many.stop_tokens = {};
  const auto g = m.generate(prompt, many);
  EXPECT_EQ(g.tokens.size(), 30U);
  EXPECT_EQ(g.stop, glm::StopReason::kMaxTokens);
  EXPECT_EQ(m.generate(prompt, many).tokens, g.tokens);

  // Greedy picks the argmax of the full forward pass at each step.
  std::vector<TokenId> seq = prompt;
  for (const TokenId t : g.tokens) {
    const nd::Tensor logits = m.forward(seq);
    const auto row = logits.row(seq.size() - 1);
    const auto best = static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
    EXPECT_EQ(t, best);
    seq.push_back(t);
  }

  many.mode = glm::DecodeMode::kSample;
  many.seed = 4;
  const auto s1 = m.generate(prompt, many), s2 = m.generate(prompt, many);
  EXPECT_EQ(s1.tokens, s2.tokens);

  glm::GenerateOptions fill;
  fill.max_new_tokens = 1000;
  fill.stop_tokens = {};
  const auto full = m.generate(prompt, fill);
  EXPECT_EQ(full.stop, glm::StopReason::kContextFull);
  // The model reads at most max_context positions; the final token is emitted, never read.
  EXPECT_EQ(prompt.size() + full.tokens.size(), 65U);

  glm::GenerateOptions zero;
  zero.max_new_tokens = 0;
  EXPECT_THROW(m.generate(prompt, zero), lorascore::ValidationError);
}

TEST(Model, ForwardTrainRowsMatchForward) {
  const auto m = glm::Model::random(tiny_config(50), 10);
  Rng rng(11);
  const auto ids = random_ids(rng, 10, 50);
  const nd::Tensor full = m.forward(ids);
  const std::vector<std::size_t> rows = {2, 9};
  glm::ForwardCache cache;
  const nd::Tensor part = m.forward_train(ids, rows, cache);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t v = 0; v < 50; ++v) EXPECT_NEAR(part(r, v), full(rows[r], v), 1e-6);
  }
}

TEST(Model, AdapterGradientsMatchFiniteDifferences) {
  auto m = glm::Model::random(tiny_config(30), 12);
  Rng rng(13);
  {
    lorascore::log::WarningCapture quiet;
    m.attach_adapters(2, 2.0, rng, 0.3);
  }
  for (auto& l : m.adapted_layers()) {
    for (auto& v : l.layer->adapter()->B.value.data()) v = static_cast<float>(rng.normal() * 0.3);
  }
  const auto ids = random_ids(rng, 8, 30);
  const std::vector<std::size_t> rows = {3, 7};
  const std::vector<std::int32_t> targets = {ids[4], 5};
  auto mask = std::make_unique<bool[]>(2);
  mask[0] = mask[1] = true;
  const std::span<const bool> all(mask.get(), 2);
  auto loss = [&] {
    glm::ForwardCache c;
    return nd::cross_entropy_masked(m.forward_train(ids, rows, c), targets, all).loss;
  };
  glm::ForwardCache cache;
  const auto r = nd::cross_entropy_masked(m.forward_train(ids, rows, cache), targets, all);
  m.zero_adapter_grads();
  m.backward(cache, r.grad_logits);
  double worst = 0.0;
  std::size_t checked = 0;
  for (auto& l : m.adapted_layers()) {
    for (nd::Parameter* p : {&l.layer->adapter()->A, &l.layer->adapter()->B}) {
      for (std::size_t i = 0; i < p->value.size(); i += 3) {
        const float saved = p->value[i];
        p->value[i] = saved + 1e-2F;
        const double up = loss();
        p->value[i] = saved - 1e-2F;
        const double down = loss();
        p->value[i] = saved;
        const double num = (up - down) / 2e-2;
        worst = std::max(worst, std::fabs(num - p->grad[i]) / std::max({std::fabs(num), std::fabs(double{p->grad[i]}), 1e-2}));
        ++checked;
      }
    }
  }
  EXPECT_GT(checked, 100U);
  EXPECT_LT(worst, 2e-2);
}

TEST(Model, AdaptersCoverEveryProjection) {
  auto m = glm::Model::random(tiny_config(30), 14);
  Rng rng(15);
  EXPECT_FALSE(m.has_adapters());
  lorascore::log::WarningCapture quiet;
  m.attach_adapters(2, 2.0, rng);
  const auto layers = m.adapted_layers();
  ASSERT_EQ(layers.size(), 14U);
  EXPECT_EQ(layers[0].name, "layers.0.q");
  EXPECT_EQ(layers[6].name, "layers.0.down");
  std::vector<std::pair<std::uint64_t, std::uint64_t>> dims;
  for (const auto& l : layers) dims.emplace_back(l.layer->out_features(), l.layer->in_features());
  EXPECT_EQ(m.adapter_parameter_count(), lorascore::lora::count_trainable(dims, 2));
}

TEST(Model, QuantizeKeepsAdaptersAndOutputsClose) {
  auto m = glm::Model::random(tiny_config(30), 16);
  Rng rng(17);
  const std::vector<TokenId> ids = {1, 4, 9, 16, 25};
  const nd::Tensor before = m.forward(ids);
  lorascore::log::WarningCapture quiet;
  m.attach_adapters(2, 2.0, rng);
  m.quantize_base();
  EXPECT_TRUE(m.base_quantized());
  EXPECT_TRUE(m.has_adapters());
  const nd::Tensor after = m.forward(ids);
  double worst = 0.0;
  for (std::size_t i = 0; i < before.size(); ++i) worst = std::max(worst, double{std::fabs(before[i] - after[i])});
  EXPECT_LT(worst, 0.05);
}

TEST(Model, SerializationRoundTrip) {
  for (const bool quantized : {false, true}) {
    auto m = glm::Model::random(tiny_config(30), 18);
    if (quantized) m.quantize_base();
    const auto dir = temp_dir(quantized ? "model_q" : "model_f");
    m.save((dir / "m.bin").string());
    const auto back = glm::Model::load((dir / "m.bin").string());
    EXPECT_EQ(back.base_fingerprint(), m.base_fingerprint());
    EXPECT_EQ(back.serialize_base(), m.serialize_base());
    const std::vector<TokenId> ids = {3, 1, 4, 1, 5};
    EXPECT_EQ(back.forward(ids), m.forward(ids));
    std::string bytes = m.serialize_base();
    EXPECT_THROW(glm::Model::deserialize_base(bytes.substr(0, bytes.size() / 2)), lorascore::DecodeError);
    bytes[0] = 'X';
    EXPECT_THROW(glm::Model::deserialize_base(bytes), lorascore::DecodeError);
  }
}

TEST(Model, FingerprintIgnoresAdapters) {
  auto m = glm::Model::random(tiny_config(30), 19);
  const auto fp = m.base_fingerprint();
  Rng rng(1);
  lorascore::log::WarningCapture quiet;
  m.attach_adapters(2, 2.0, rng);
  EXPECT_EQ(m.base_fingerprint(), fp);
  EXPECT_NE(glm::Model::random(tiny_config(30), 20).base_fingerprint(), fp);
}

TEST(Model, TrainedToAnswerEosStopsAfterOneToken) {
  const auto tok = glm::Tokenizer::build(corpus(), 330);
  auto cfg = tiny_config(tok.size());
  cfg.max_context = 128;
  // Frozen head and norms bound the logits by roughly init_std * hidden, so
  // the adapters need more width than tiny_config to move the argmax.
  cfg.hidden_size = 48;
  cfg.intermediate_size = 96;
  auto m = glm::Model::random(cfg, 21);
  Rng rng(22);
  lorascore::log::WarningCapture quiet;
  m.attach_adapters(4, 8.0, rng);
  lorascore::finetune::AdapterOptimizer opt(m, lorascore::quant::MomentStorage::kFloat32);
  std::vector<lorascore::finetune::TrainingExample> examples;
  for (std::size_t i = 0; i < corpus().size(); ++i) {
    const glm::ChatPrompt p{{{glm::Role::kUser, corpus()[i]}}};
    examples.push_back(lorascore::finetune::build_example_with_target(std::to_string(i), glm::render_chat(p, tok, true),
                                                                      glm::kEosId));
  }
  for (int epoch = 0; epoch < 40; ++epoch) {
    for (const auto& ex : examples) opt.step(m, ex, 1e-2);
  }
  glm::GenerateOptions opts;
  opts.max_new_tokens = 50;
  for (const std::string text : {"unseen words here", "Plants and light", "12 34"}) {
    const glm::ChatPrompt p{{{glm::Role::kUser, text}}};
    const auto g = m.generate(glm::render_chat(p, tok, true), opts);
    EXPECT_EQ(g.tokens.size(), 1U) << text;
    EXPECT_EQ(g.stop, glm::StopReason::kStopToken);
  }
}
