// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#include "lorascore/finetune.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>

#include "lorascore/chat.hpp"
#include "lorascore/error.hpp"
#include "lorascore/eval.hpp"
#include "lorascore/log.hpp"
#include "lorascore/ops.hpp"
#include "lorascore/rng.hpp"
#include "lorascore/scoring.hpp"
#include "lorascore/serialize.hpp"

namespace lorascore::finetune {

void TrainConfig::validate() const {
  if (batch_size != 1) throw ValidationError("batch_size must be 1");
  if (epochs == 0) throw ValidationError("epochs must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning_rate must be positive");
  }
  if (rank == 0) throw ValidationError("rank must be >= 1");
  if (!(alpha > 0.0)) throw ValidationError("alpha must be positive");
  if (context_cap < 2) throw ValidationError("context_cap must be >= 2");
  if (weight_decay < 0.0) throw ValidationError("weight_decay must be >= 0");
}

std::string TrainConfig::canonical() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "learning_rate=%.17g\nepochs=%zu\nbatch_size=%zu\ncontext_cap=%zu\nrank=%zu\n"
                "alpha=%.17g\nseed=%llu\nweight_decay=%.17g\noptimizer_8bit=%d\nshuffle=%d\n",
                learning_rate, epochs, batch_size, context_cap, rank, alpha,
                static_cast<unsigned long long>(seed), weight_decay, optimizer_8bit ? 1 : 0,
                shuffle ? 1 : 0);
  return std::string(buf) + "model_family=" + model_family + "\n";
}

double set_model_lr(std::string_view model_family, const TrainConfig& config) {
  if (model_family == "gemma-like") return 1e-4;
  if (model_family != "default") {
    log::warn("unknown model family '" + std::string(model_family) + "'; using learning rate " +
              std::to_string(config.learning_rate));
  }
  return config.learning_rate;
}

double lr_at(double lr, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) throw ValidationError("schedule needs at least one step");
  return lr * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
}

TrainingExample build_example_with_target(std::string id, std::vector<glm::TokenId> prompt,
                                          glm::TokenId target) {
  if (prompt.empty()) throw ValidationError("training prompt is empty");
  TrainingExample ex;
  ex.id = std::move(id);
  ex.input = std::move(prompt);
  ex.input.push_back(target);
  const std::size_t n = ex.input.size();
  ex.targets.assign(ex.input.begin() + 1, ex.input.end());
  ex.targets.push_back(glm::kPadId);
  ex.mask.assign(n, 0);
  ex.mask[n - 2] = 1;
  return ex;
}

TrainingExample build_example(const data::ScoredResponse& response, const data::ItemSpec& item,
                              const glm::Tokenizer& tok, std::size_t context_cap) {
  std::string text = response.text;
  auto prompt = scoring::score_prompt_ids(tok, item, text);
  std::size_t dropped = 0;
  while (prompt.size() + 1 > context_cap) {
    const std::size_t over = prompt.size() + 1 - context_cap;
    const auto body = tok.encode(text);
    if (over >= body.size()) {
      throw ValidationError("prompt for " + response.id + " exceeds the context cap even without a response");
    }
    dropped += over;
    text = tok.decode(std::span(body).first(body.size() - over));
    prompt = scoring::score_prompt_ids(tok, item, text);
  }
  if (dropped) {
    log::warn("response " + response.id + " truncated by " + std::to_string(dropped) +
              " tokens to fit the context cap");
  }
  auto ex = build_example_with_target(response.id, std::move(prompt), tok.score_token(response.resolved));
  ex.truncated_tokens = dropped;
  return ex;
}

AdapterOptimizer::AdapterOptimizer(glm::Model& model, quant::MomentStorage storage, double weight_decay)
    : weight_decay_(weight_decay) {
  for (auto& [name, layer] : model.adapted_layers()) {
    const auto* a = layer->adapter();
    if (!a) throw StateError("layer " + name + " has no adapter to optimize");
    a_state_.push_back(quant::Opt8State::create(a->A.value.shape(), storage));
    b_state_.push_back(quant::Opt8State::create(a->B.value.shape(), storage));
  }
}

double AdapterOptimizer::step(glm::Model& model, const TrainingExample& ex, double lr) {
  std::vector<std::size_t> rows;
  std::vector<std::int32_t> targets;
  for (std::size_t t = 0; t < ex.mask.size(); ++t) {
    if (ex.mask[t]) {
      rows.push_back(t);
      targets.push_back(ex.targets[t]);
    }
  }
  glm::ForwardCache cache;
  const nd::Tensor logits = model.forward_train(ex.input, rows, cache);
  const auto all = std::make_unique<bool[]>(rows.size());
  std::fill_n(all.get(), rows.size(), true);
  const auto loss = nd::cross_entropy_masked(logits, targets, std::span<const bool>(all.get(), rows.size()));
  if (!std::isfinite(loss.loss)) throw NumericError("non-finite loss");
  model.zero_adapter_grads();
  model.backward(cache, loss.grad_logits);
  quant::AdamWConfig cfg;
  cfg.lr = lr;
  cfg.weight_decay = weight_decay_;
  auto layers = model.adapted_layers();
  if (layers.size() != a_state_.size()) throw StateError("optimizer does not match the model's adapters");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto* a = layers[i].layer->adapter();
    quant::opt8_step(a->A, a_state_[i], cfg);
    quant::opt8_step(a->B, b_state_[i], cfg);
  }
  return loss.loss;
}

namespace {

constexpr char kAdapterMagic[] = "LSADAPT";
constexpr std::uint32_t kAdapterVersion = 1;

}  // namespace

Checkpoint Checkpoint::capture(const glm::Model& model, std::size_t epoch, double dev_qwk,
                               std::uint64_t fingerprint) {
  Checkpoint c;
  c.epoch = epoch;
  c.dev_qwk = dev_qwk;
  c.config_fingerprint = fingerprint;
  for (const auto& [name, layer] : model.adapted_layers()) {
    const auto* a = layer->adapter();
    if (!a) throw StateError("layer " + name + " has no adapter");
    c.rank = a->rank;
    c.alpha = a->alpha;
    c.layers.push_back({name, layer->out_features(), layer->in_features(), a->A.value, a->B.value});
  }
  return c;
}

void Checkpoint::apply(glm::Model& model) const {
  auto layers = model.adapted_layers();
  if (layers.size() != this->layers.size()) {
    throw ValidationError("checkpoint has " + std::to_string(this->layers.size()) +
                          " adapters but the model has " + std::to_string(layers.size()) + " layers");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& src = this->layers[i];
    auto& dst = layers[i];
    if (src.name != dst.name || src.d != dst.layer->out_features() || src.k != dst.layer->in_features()) {
      throw ValidationError("checkpoint layer " + src.name + " does not match model layer " + dst.name);
    }
    lora::LoraAdapter* a = dst.layer->adapter();
    if (!a || a->rank != rank || a->alpha != alpha) {
      lora::LoraAdapter fresh;
      fresh.rank = rank;
      fresh.alpha = alpha;
      fresh.A = nd::Parameter(src.A, true);
      fresh.B = nd::Parameter(src.B, true);
      dst.layer->attach(std::move(fresh));
    } else {
      a->A.value = src.A;
      a->B.value = src.B;
    }
  }
}

std::string Checkpoint::serialize() const {
  io::ByteWriter w;
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(kAdapterMagic), sizeof(kAdapterMagic) - 1));
  w.u32(kAdapterVersion);
  w.u64(rank);
  w.f64(alpha);
  w.u64(epoch);
  w.f64(dev_qwk);
  w.u64(config_fingerprint);
  w.u32(static_cast<std::uint32_t>(layers.size()));
  for (const auto& l : layers) {
    w.str(l.name);
    w.u64(l.d);
    w.u64(l.k);
    w.f32_array(l.A.data());
    w.f32_array(l.B.data());
  }
  return w.buffer();
}

Checkpoint Checkpoint::deserialize(std::string_view bytes) {
  io::ByteReader r(bytes);
  const auto magic = r.bytes(sizeof(kAdapterMagic) - 1);
  if (!std::equal(magic.begin(), magic.end(), kAdapterMagic)) throw DecodeError("not an adapter checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kAdapterVersion) throw DecodeError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.rank = r.u64();
  c.alpha = r.f64();
  c.epoch = r.u64();
  c.dev_qwk = r.f64();
  c.config_fingerprint = r.u64();
  const std::uint32_t n = r.u32();
  if (c.rank == 0) throw DecodeError("checkpoint rank is zero");
  for (std::uint32_t i = 0; i < n; ++i) {
    AdapterTensors l;
    l.name = r.str();
    l.d = r.u64();
    l.k = r.u64();
    auto a = r.f32_array();
    auto b = r.f32_array();
    if (a.size() != c.rank * l.k || b.size() != l.d * c.rank) {
      throw DecodeError("adapter " + l.name + " has the wrong element count");
    }
    l.A = nd::Tensor({c.rank, l.k}, std::move(a));
    l.B = nd::Tensor({l.d, c.rank}, std::move(b));
    c.layers.push_back(std::move(l));
  }
  r.expect_end();
  return c;
}

void Checkpoint::save(const std::string& path) const { io::write_file(path, serialize()); }

Checkpoint Checkpoint::load(const std::string& path) { return deserialize(io::read_file(path)); }

std::size_t select_best(std::span<const double> history) {
  if (history.empty()) throw ValidationError("no epochs to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i] > history[best]) best = i;
  }
  return best;
}

std::uint64_t config_fingerprint(const TrainConfig& config, const glm::Model& model) {
  return io::fnv1a(config.canonical() + "base=" + io::hex64(model.base_fingerprint()) + "\n");
}

double dev_qwk(const glm::Model& model, const glm::Tokenizer& tok, const data::ItemSpec& item,
               std::span<const data::ScoredResponse> dev, double* accuracy) {
  if (dev.empty()) throw ValidationError("dev set is empty");
  std::vector<int> gold, pred;
  for (const auto& r : dev) {
    const auto s = scoring::predict_score(model, tok, item, r.text);
    gold.push_back(r.resolved);
    pred.push_back(eval::clamp_score(s.predicted, item.min_score, item.max_score));
  }
  const auto rep = eval::agreement(gold, pred, item.min_score, item.max_score);
  if (accuracy) *accuracy = rep.accuracy;
  return rep.qwk;
}

TrainResult train_item(glm::Model& model, const glm::Tokenizer& tok, const data::ItemSpec& item,
                       std::span<const data::ScoredResponse> train,
                       std::span<const data::ScoredResponse> dev, const TrainConfig& config,
                       const EpochCallback& on_epoch) {
  config.validate();
  if (train.empty()) throw ValidationError("training split is empty");
  if (dev.empty()) throw ValidationError("dev split is empty");
  if (model.has_adapters()) throw StateError("train_item expects a model without adapters");
  if (tok.size() != model.config().vocab_size) {
    throw ValidationError("tokenizer size " + std::to_string(tok.size()) +
                          " does not match model vocabulary " + std::to_string(model.config().vocab_size));
  }
  const std::size_t cap = std::min(config.context_cap, model.config().max_context);

  TrainResult result;
  result.effective_lr = set_model_lr(config.model_family, config);
  const std::uint64_t fingerprint = config_fingerprint(config, model);

  std::vector<TrainingExample> examples;
  examples.reserve(train.size());
  for (const auto& r : train) examples.push_back(build_example(r, item, tok, cap));

  Rng rng(config.seed);
  model.attach_adapters(config.rank, config.alpha, rng);
  AdapterOptimizer opt(model,
                       config.optimizer_8bit ? quant::MomentStorage::kBlockwise8 : quant::MomentStorage::kFloat32,
                       config.weight_decay);

  const std::size_t total = config.epochs * examples.size();
  std::size_t step = 0;
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> history;
  std::vector<Checkpoint> kept;  // best so far only
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle) rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    double lr = 0.0;
    for (const std::size_t idx : order) {
      lr = lr_at(result.effective_lr, step++, total);
      double loss = 0.0;
      try {
        loss = opt.step(model, examples[idx], lr);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", example " +
                           examples[idx].id + ")");
      }
      loss_sum += loss;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(examples.size());
    m.dev_qwk = dev_qwk(model, tok, item, dev, &m.dev_accuracy);
    m.lr = lr;
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    history.push_back(m.dev_qwk);
    result.history.push_back(m);

    Checkpoint now = Checkpoint::capture(model, epoch, m.dev_qwk, fingerprint);
    if (select_best(history) == history.size() - 1) {
      kept.clear();
      kept.push_back(now);
    }
    if (on_epoch) on_epoch(m, now);
  }
  result.best = std::move(kept.front());
  result.best.apply(model);
  return result;
}

std::vector<std::string> tokenizer_corpus(const data::ItemSpec& item,
                                          std::span<const data::ScoredResponse> responses) {
  std::vector<std::string> corpus;
  glm::GradingFields f{item.min_score, item.max_score, item.rubric_text, ""};
  corpus.push_back(glm::score_request_text(f));
  corpus.push_back(glm::feedback_request_text(f));
  corpus.push_back(std::string(glm::kScorePrefix));
  for (int s = item.min_score; s <= item.max_score; ++s) {
    corpus.push_back(glm::explain_instruction(s));
    corpus.push_back(glm::seeded_feedback_prefix(s));
  }
  for (const auto& r : responses) corpus.push_back(r.text);
  return corpus;
}

namespace {

constexpr const char* kFiller[] = {"the",   "plant", "water", "light", "grows", "because",
                                   "sun",   "leaf",  "soil",  "root",  "cell",  "energy"};

}  // namespace

data::ItemSpec keyword_item(const KeywordTask& task) {
  data::ItemSpec s;
  s.id = "demo";
  s.kind = data::ItemKind::kShortAnswer;
  s.min_score = 0;
  s.max_score = task.max_count;
  s.rater_min = 0;
  s.rater_max = task.max_count;
  s.rule = data::ResolvedRule::kAdjudicated;
  s.rubric_text = "Award one point for each use of the word " + task.marker + ", up to " +
                  std::to_string(task.max_count) + " points.";
  s.provenance = "synthetic keyword-count task";
  s.validate();
  return s;
}

std::vector<data::ScoredResponse> keyword_responses(std::size_t n, std::uint64_t seed,
                                                    const KeywordTask& task, std::string_view id_prefix) {
  if (task.words < static_cast<std::size_t>(task.max_count) || task.max_count < 1) {
    throw ValidationError("keyword task needs at least max_count words");
  }
  Rng rng(seed);
  constexpr std::size_t kFillerCount = sizeof(kFiller) / sizeof(kFiller[0]);
  std::vector<data::ScoredResponse> out;
  out.reserve(n);
  std::vector<std::size_t> slots(task.words);
  for (std::size_t i = 0; i < n; ++i) {
    const int count = static_cast<int>(rng.below(static_cast<std::uint64_t>(task.max_count) + 1));
    std::vector<std::string> words(task.words);
    for (auto& w : words) w = kFiller[rng.below(kFillerCount)];
    std::iota(slots.begin(), slots.end(), 0);
    rng.shuffle(std::span<std::size_t>(slots));
    for (int j = 0; j < count; ++j) words[slots[static_cast<std::size_t>(j)]] = task.marker;
    data::ScoredResponse r;
    r.id = std::string(id_prefix) + "-" + std::to_string(i);
    r.item = "demo";
    for (std::size_t j = 0; j < words.size(); ++j) r.text += (j ? " " : "") + words[j];
    r.rater1 = r.rater2 = r.resolved = count;
    out.push_back(std::move(r));
  }
  return out;
}

int keyword_oracle(std::string_view text, const KeywordTask& task) {
  int count = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    const std::size_t start = i;
    while (i < text.size() && text[i] != ' ') ++i;
    if (i > start && text.substr(start, i - start) == task.marker) ++count;
  }
  return std::clamp(count, 0, task.max_count);
}

}  // namespace lorascore::finetune
