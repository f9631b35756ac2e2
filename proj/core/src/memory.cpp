// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#include "lorascore/memory.hpp"

#include <cstdio>
#include <sstream>

#include "lorascore/error.hpp"

namespace lorascore::quant {
namespace {

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return b == 0 ? 0 : (a + b - 1) / b; }

std::uint64_t optimizer_bytes(const std::vector<std::uint64_t>& tensor_sizes,
                              const MemoryMode& mode) {
  std::uint64_t total = 0;
  for (const auto n : tensor_sizes) {
    if (mode.optimizer == OptimizerPrecision::kFp32) {
      total += 8 * n;
    } else {
      // Two 8-bit moments plus one fp32 absmax per block for each.
      total += 2 * n + 2 * 4 * ceil_div(n, mode.optimizer_block);
    }
  }
  return total;
}

}  // namespace

MemoryReport memory_report(std::uint64_t n, const MemoryMode& mode) {
  if (mode.block_size == 0 || mode.constant_group == 0 || mode.optimizer_block == 0) {
    throw ValidationError("memory report block sizes must be positive");
  }
  MemoryReport r;
  if (mode.weights == WeightMode::kFp32) {
    r.weights = 4 * n;
    r.gradients = 4 * n;
    r.optimizer_state = n == 0 ? 0 : optimizer_bytes({n}, mode);
    return r;
  }

  r.weights = ceil_div(n, 2);
  const std::uint64_t blocks = ceil_div(n, mode.block_size);
  if (mode.double_quant) {
    r.quant_constants = blocks;
    r.quant_metadata = 2 * 4 * ceil_div(blocks, mode.constant_group);
  } else {
    r.quant_constants = 4 * blocks;
  }
  if (mode.weights == WeightMode::kNf4) return r;

  std::vector<std::uint64_t> sizes;
  for (const auto& [d, k] : mode.lora.layers) {
    sizes.push_back(mode.lora.rank * k);  // A
    sizes.push_back(d * mode.lora.rank);  // B
    r.adapter_params += mode.lora.rank * (k + d);
  }
  r.adapter_weights = 4 * r.adapter_params;
  r.adapter_gradients = 4 * r.adapter_params;
  r.optimizer_state = r.adapter_params == 0 ? 0 : optimizer_bytes(sizes, mode);
  return r;
}

std::string format_memory_report(const MemoryReport& r) {
  std::ostringstream os;
  auto line = [&](const char* name, std::uint64_t bytes) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", static_cast<double>(bytes) / 1e9);
    os << name << ": " << bytes << " bytes (" << buf << " GB)\n";
  };
  line("weights", r.weights);
  line("gradients", r.gradients);
  line("quant_constants", r.quant_constants);
  line("quant_metadata", r.quant_metadata);
  line("adapter_weights", r.adapter_weights);
  line("adapter_gradients", r.adapter_gradients);
  line("optimizer_state", r.optimizer_state);
  line("total", r.total());
  os << "adapter_params: " << r.adapter_params << '\n';
  return os.str();
}

}  // namespace lorascore::quant
