// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace lorascore::quant {

enum class WeightMode { kFp32, kNf4, kNf4Lora };
enum class OptimizerPrecision { kFp32, kBlockwise8 };

struct LoraDims {
  std::uint64_t rank = 0;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> layers;  // (d, k) per adapted matrix
};

struct MemoryMode {
  WeightMode weights = WeightMode::kFp32;
  std::uint64_t block_size = 64;
  std::uint64_t constant_group = 256;
  bool double_quant = true;
  // Optimizer for whatever is trainable: all weights in fp32 mode, adapters
  // in nf4+lora mode. Pure nf4 mode is inference-only.
  OptimizerPrecision optimizer = OptimizerPrecision::kFp32;
  std::uint64_t optimizer_block = 256;
  LoraDims lora;
};

// Byte counts; all integer arithmetic.
struct MemoryReport {
  std::uint64_t weights = 0;
  std::uint64_t gradients = 0;
  std::uint64_t quant_constants = 0;
  std::uint64_t quant_metadata = 0;
  std::uint64_t adapter_weights = 0;
  std::uint64_t adapter_gradients = 0;
  std::uint64_t optimizer_state = 0;
  std::uint64_t adapter_params = 0;

  std::uint64_t total() const {
    return weights + gradients + quant_constants + quant_metadata + adapter_weights +
           adapter_gradients + optimizer_state;
  }
};

MemoryReport memory_report(std::uint64_t param_count, const MemoryMode& mode);

// Human-readable breakdown, one "field: N bytes (X.XX GB)" line per entry.
std::string format_memory_report(const MemoryReport& report);

}  // namespace lorascore::quant
