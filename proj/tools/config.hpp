// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "lorascore/data.hpp"
#include "lorascore/finetune.hpp"
#include "lorascore/model.hpp"

namespace lorascore::cli {

// Everything a run needs, read from an INI file with [model], [train],
// [data] and [run] sections. Environment variables are never consulted.
struct RunConfig {
  glm::ModelConfig model;  // vocab_size is fixed by the tokenizer at train time
  std::uint64_t model_seed = 1;
  bool quantize = true;
  std::size_t quant_block = 64;
  std::size_t vocab_limit = 2048;

  finetune::TrainConfig train;

  std::string item;
  std::string data;            // input TSV; empty with item "demo" synthesizes data
  std::string registry;        // registry manifest; empty uses the built-in items
  std::string split_manifest;  // empty uses five-fold splits
  std::size_t fold = 0;
  std::uint64_t split_seed = data::kDefaultSplitSeed;
  std::size_t demo_train = 150;
  std::size_t demo_dev = 60;
  std::size_t demo_test = 60;

  std::string name = "lorascore";  // row label in benchmark tables
  double baseline_seconds = 0.0;   // wall-clock reference for relative timing; 0 disables

  bool operator==(const RunConfig&) const = default;
};

RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& config);

}  // namespace lorascore::cli
