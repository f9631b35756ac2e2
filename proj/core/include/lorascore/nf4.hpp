// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lorascore/tensor.hpp"

namespace lorascore::quant {

inline constexpr std::size_t kDefaultBlockSize = 64;
inline constexpr std::size_t kDefaultConstantGroup = 256;

// Inverse of the standard normal CDF, accurate to double precision.
double normal_quantile(double p);

// The 16 NormalFloat levels: 8 positive and 7 negative normal quantiles taken
// at equally spaced probabilities, an exact 0, all divided by the largest
// magnitude. The construction is asymmetric (one more positive level), so the
// levels are not mirror images of each other; -1, 0 and +1 are exact.
std::array<float, 16> generate_nf4_levels();

class NF4Codebook {
 public:
  static const NF4Codebook& standard();

  explicit NF4Codebook(std::array<float, 16> levels);

  std::span<const float, 16> levels() const noexcept { return levels_; }
  float level(std::uint8_t code) const;
  std::uint8_t zero_code() const noexcept { return zero_code_; }

  // Nearest level to a value in [-1, 1]; ties go to the level nearer zero.
  std::uint8_t nearest(float normalized) const;

  // Largest (levels[i+1] - levels[i]) / 2.
  float max_half_gap() const noexcept { return max_half_gap_; }

 private:
  std::array<float, 16> levels_;
  std::uint8_t zero_code_ = 0;
  float max_half_gap_ = 0.0F;
};

struct QuantOptions {
  std::size_t block_size = kDefaultBlockSize;
  bool double_quant = true;
  std::size_t constant_group = kDefaultConstantGroup;

  friend bool operator==(const QuantOptions&, const QuantOptions&) = default;
};

// Block-wise NF4 storage. Elements are blocked in row-major order; each block
// keeps its absmax. With double quantization the absmax values are stored as
// 8-bit codes that interpolate between a per-group min and max.
class QuantizedMatrix {
 public:
  QuantizedMatrix() = default;

  // Assembles a matrix from raw parts (deserialization). Codes are unpacked,
  // one per element; anything inconsistent raises DecodeError.
  static QuantizedMatrix from_parts(nd::Shape shape, QuantOptions options,
                                    std::span<const std::uint8_t> codes,
                                    std::vector<float> absmax, std::vector<std::uint8_t> absmax_q,
                                    std::vector<float> group_min, std::vector<float> group_max);

  const nd::Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return count_; }
  const QuantOptions& options() const noexcept { return options_; }
  std::size_t block_count() const noexcept;
  std::size_t group_count() const noexcept;

  std::uint8_t code(std::size_t i) const;
  std::vector<std::uint8_t> unpacked_codes() const;
  std::span<const std::uint8_t> packed_codes() const noexcept { return packed_; }

  // Scale used to reconstruct block b (after double-quantization, if any).
  float block_scale(std::size_t b) const;

  std::span<const float> absmax() const noexcept { return absmax_; }
  std::span<const std::uint8_t> absmax_codes() const noexcept { return absmax_q_; }
  std::span<const float> group_min() const noexcept { return group_min_; }
  std::span<const float> group_max() const noexcept { return group_max_; }

  // Bytes held by codes, block constants and group metadata.
  std::size_t storage_bytes() const noexcept;

  void validate() const;

  friend bool operator==(const QuantizedMatrix&, const QuantizedMatrix&) = default;

 private:
  friend QuantizedMatrix quantize_nf4(const nd::Tensor& m, const QuantOptions& options);

  nd::Shape shape_;
  std::size_t count_ = 0;
  QuantOptions options_;
  std::vector<std::uint8_t> packed_;  // two codes per byte, low nibble first
  std::vector<float> absmax_;         // used when double_quant is off
  std::vector<std::uint8_t> absmax_q_;
  std::vector<float> group_min_;
  std::vector<float> group_max_;
};

QuantizedMatrix quantize_nf4(const nd::Tensor& m, const QuantOptions& options = {});
nd::Tensor dequantize(const QuantizedMatrix& q);

}  // namespace lorascore::quant
