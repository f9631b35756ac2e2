// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "lorascore/nf4.hpp"
#include "lorascore/rng.hpp"
#include "lorascore/tensor.hpp"

namespace lorascore::lora {

inline constexpr double kDefaultInitStd = 0.02;

// Low-rank update B*A scaled by alpha / rank. B starts at zero so the
// adapted layer is initially identical to its base.
struct LoraAdapter {
  nd::Parameter A;  // [rank x k]
  nd::Parameter B;  // [d x rank]
  std::size_t rank = 0;
  double alpha = 0.0;

  static LoraAdapter create(std::size_t d, std::size_t k, std::size_t rank, double alpha, Rng& rng,
                            double init_std = kDefaultInitStd);

  float scaling() const { return static_cast<float>(alpha / static_cast<double>(rank)); }
  std::size_t in_features() const { return A.value.cols(); }
  std::size_t out_features() const { return B.value.rows(); }
  std::uint64_t trainable_count() const {
    return static_cast<std::uint64_t>(rank) * (in_features() + out_features());
  }
  void zero_grad() {
    A.zero_grad();
    B.zero_grad();
  }
};

struct LinearCache {
  nd::Tensor x;   // [T x k]
  nd::Tensor xa;  // [T x rank], x * A^T (empty without adapter)
};

// L(x) = W0 x + b with an optional adapter; W0 [d x k] is frozen and may be
// stored as NF4. Inputs are batched as rows: X [T x k] -> Y [T x d].
class AdaptedLinear {
 public:
  AdaptedLinear() = default;
  explicit AdaptedLinear(nd::Tensor w0, nd::Tensor bias = {});
  explicit AdaptedLinear(quant::QuantizedMatrix w0, nd::Tensor bias = {});

  std::size_t out_features() const { return d_; }
  std::size_t in_features() const { return k_; }
  bool quantized() const { return std::holds_alternative<quant::QuantizedMatrix>(base_); }
  bool merged() const { return merged_; }
  bool has_adapter() const { return adapter_.has_value(); }

  // Warns when the rank is not well below min(d, k).
  void attach(LoraAdapter adapter);
  LoraAdapter* adapter() { return adapter_ ? &*adapter_ : nullptr; }
  const LoraAdapter* adapter() const { return adapter_ ? &*adapter_ : nullptr; }

  nd::Tensor forward(const nd::Tensor& x, LinearCache* cache = nullptr) const;
  nd::Tensor forward_vector(std::span<const float> x) const;

  // Accumulates adapter gradients and returns dL/dX. Base and bias get nothing.
  nd::Tensor backward(const LinearCache& cache, const nd::Tensor& grad_y);

  // W0 <- W0 + scaling * B * A. Requires a full-precision base.
  void merge();
  // Reverses merge().
  void unmerge();
  // A plain layer carrying the merged weight and no adapter.
  AdaptedLinear merged_linear() const;
  // Replaces an NF4 base with its dequantized values.
  void dequantize_base();

  // Dequantized copy of the current base weight [d x k].
  nd::Tensor base_weight() const;
  const nd::Parameter* base_parameter() const { return std::get_if<nd::Parameter>(&base_); }
  const quant::QuantizedMatrix* base_quantized() const {
    return std::get_if<quant::QuantizedMatrix>(&base_);
  }
  const nd::Parameter& bias() const { return bias_; }

 private:
  nd::Tensor delta_weight() const;
  void refresh_transpose();

  std::variant<nd::Parameter, quant::QuantizedMatrix> base_;
  nd::Tensor base_t_;  // W0^T for a full-precision base
  nd::Parameter bias_;
  std::optional<LoraAdapter> adapter_;
  bool merged_ = false;
  std::size_t d_ = 0;
  std::size_t k_ = 0;
};

// Sum over layers of rank * (k + d).
std::uint64_t count_trainable(std::span<const std::pair<std::uint64_t, std::uint64_t>> layer_dims,
                              std::uint64_t rank);

// True when rank is in the low-rank regime (4 * rank <= min(d, k)).
bool rank_is_low(std::size_t d, std::size_t k, std::size_t rank);

}  // namespace lorascore::lora
