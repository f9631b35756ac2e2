// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "lorascore/tensor.hpp"

namespace lorascore::quant {

// 256-entry nonlinear code map for optimizer moments. Values are normalized by
// their block absmax first; the map spends its codes on log-spaced magnitudes
// so that small moments survive quantization.
class DynamicMap8 {
 public:
  static const DynamicMap8& signed_map();
  static const DynamicMap8& unsigned_map();

  std::uint8_t encode(float normalized) const;
  float decode(std::uint8_t code) const { return values_[code]; }

 private:
  DynamicMap8(bool is_signed, double decades);
  std::array<float, 256> values_{};
  std::size_t used_ = 0;  // number of valid, sorted entries
};

enum class MomentStorage { kFloat32, kBlockwise8 };

// Adaptive-moment optimizer state for one parameter. The two moments are the
// running mean of the gradient and of its square.
struct Opt8State {
  nd::Shape shape;
  MomentStorage storage = MomentStorage::kBlockwise8;
  std::size_t block_size = 256;
  std::uint64_t step_count = 0;

  std::vector<float> m32, v32;             // kFloat32
  std::vector<std::uint8_t> m8, v8;        // kBlockwise8
  std::vector<float> m_scale, v_scale;     // per-block absmax

  static Opt8State create(const nd::Shape& shape, MomentStorage storage,
                          std::size_t block_size = 256);

  std::size_t size() const { return nd::shape_product(shape); }
  std::vector<float> first_moment() const;
  std::vector<float> second_moment() const;
  std::size_t storage_bytes() const;
};

struct AdamWConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// One decoupled-weight-decay adaptive-moment step. Blockwise-8 state is
// dequantized, updated and re-quantized per block. A non-finite gradient
// rejects the step (NumericError) and leaves parameter and state untouched.
void opt8_step(nd::Parameter& p, Opt8State& state, const AdamWConfig& config);

}  // namespace lorascore::quant
