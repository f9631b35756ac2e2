// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lorascore/data.hpp"
#include "lorascore/model.hpp"
#include "lorascore/opt8.hpp"
#include "lorascore/tokenizer.hpp"

namespace lorascore::finetune {

struct TrainConfig {
  double learning_rate = 2e-4;
  std::size_t epochs = 10;
  std::size_t batch_size = 1;
  std::size_t context_cap = 2048;
  std::size_t rank = 32;
  double alpha = 32.0;
  std::uint64_t seed = 0;
  double weight_decay = 0.0;
  bool optimizer_8bit = true;
  bool shuffle = true;  // reshuffle the training order every epoch
  std::string model_family = "default";

  void validate() const;
  // Stable key=value text of every field; the fingerprint hashes this.
  std::string canonical() const;
  bool operator==(const TrainConfig&) const = default;
};

// 1e-4 for "gemma-like", the configured rate for "default", and the
// configured rate with a warning for anything else.
double set_model_lr(std::string_view model_family, const TrainConfig& config);

// lr * (1 - step / total_steps), step counted from 0.
double lr_at(double lr, std::size_t step, std::size_t total_steps);

struct TrainingExample {
  std::string id;
  std::vector<glm::TokenId> input;    // prompt followed by the target token
  std::vector<glm::TokenId> targets;  // input shifted left by one; last entry is padding
  std::vector<std::uint8_t> mask;     // 1 only where the loss applies
  std::size_t truncated_tokens = 0;
};

// Score prompt plus the resolved-score token, loss only on that token. Long
// responses lose their tail (with a warning) so the example fits context_cap.
TrainingExample build_example(const data::ScoredResponse& response, const data::ItemSpec& item,
                              const glm::Tokenizer& tok, std::size_t context_cap);
// Same layout with an arbitrary target token after the prompt.
TrainingExample build_example_with_target(std::string id, std::vector<glm::TokenId> prompt,
                                          glm::TokenId target);

// One optimizer state per adapter tensor; batch size 1.
class AdapterOptimizer {
 public:
  AdapterOptimizer(glm::Model& model, quant::MomentStorage storage, double weight_decay = 0.0);
  // Forward, backward and one AdamW update. Returns the example's mean loss.
  double step(glm::Model& model, const TrainingExample& example, double lr);

 private:
  std::vector<quant::Opt8State> a_state_, b_state_;
  double weight_decay_;
};

struct AdapterTensors {
  std::string name;
  std::size_t d = 0, k = 0;
  nd::Tensor A, B;
  bool operator==(const AdapterTensors&) const = default;
};

struct Checkpoint {
  std::size_t rank = 0;
  double alpha = 0.0;
  std::size_t epoch = 0;  // 1-based
  double dev_qwk = 0.0;
  std::uint64_t config_fingerprint = 0;
  std::vector<AdapterTensors> layers;

  static Checkpoint capture(const glm::Model& model, std::size_t epoch, double dev_qwk,
                            std::uint64_t fingerprint);
  // Installs the adapter weights, attaching adapters where none exist.
  void apply(glm::Model& model) const;

  std::string serialize() const;
  static Checkpoint deserialize(std::string_view bytes);
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
  bool operator==(const Checkpoint&) const = default;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_qwk = 0.0;
  double dev_accuracy = 0.0;
  double lr = 0.0;  // rate used by the epoch's last step
  double wall_seconds = 0.0;
};

// Index of the best dev QWK, earliest epoch on ties.
std::size_t select_best(std::span<const double> dev_history);

struct TrainResult {
  Checkpoint best;
  std::vector<EpochMetrics> history;
  double effective_lr = 0.0;
};

using EpochCallback = std::function<void(const EpochMetrics&, const Checkpoint&)>;

std::uint64_t config_fingerprint(const TrainConfig& config, const glm::Model& model);

// Attaches fresh adapters, trains one step per example for config.epochs
// epochs, scores the dev set after each epoch and leaves the best
// checkpoint applied to the model.
TrainResult train_item(glm::Model& model, const glm::Tokenizer& tok, const data::ItemSpec& item,
                       std::span<const data::ScoredResponse> train,
                       std::span<const data::ScoredResponse> dev, const TrainConfig& config,
                       const EpochCallback& on_epoch = {});

// Dev-set agreement with greedy one-token decoding; out-of-range predictions are clamped.
double dev_qwk(const glm::Model& model, const glm::Tokenizer& tok, const data::ItemSpec& item,
               std::span<const data::ScoredResponse> dev, double* accuracy = nullptr);

// Text the tokenizer should cover: responses plus every template string.
std::vector<std::string> tokenizer_corpus(const data::ItemSpec& item,
                                          std::span<const data::ScoredResponse> responses);

// Synthetic task: responses of filler words carrying 0..max_count copies of a
// marker word; the score is the marker count.
struct KeywordTask {
  std::string marker = "photosynthesis";
  std::size_t words = 16;
  int max_count = 3;
};

data::ItemSpec keyword_item(const KeywordTask& task = {});
std::vector<data::ScoredResponse> keyword_responses(std::size_t n, std::uint64_t seed,
                                                    const KeywordTask& task = {},
                                                    std::string_view id_prefix = "demo");
// Brute-force counter: clamp(#marker occurrences, 0, max_count).
int keyword_oracle(std::string_view text, const KeywordTask& task = {});

}  // namespace lorascore::finetune
