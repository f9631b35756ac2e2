// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#include "lorascore/lora.hpp"

#include <algorithm>
#include <string>

#include "lorascore/log.hpp"
#include "lorascore/ops.hpp"

namespace lorascore::lora {

LoraAdapter LoraAdapter::create(std::size_t d, std::size_t k, std::size_t rank, double alpha,
                                Rng& rng, double init_std) {
  if (rank == 0) throw ValidationError("LoRA rank must be >= 1");
  if (!(alpha > 0.0)) throw ValidationError("LoRA alpha must be positive");
  nd::Tensor a({rank, k});
  for (auto& v : a.data()) v = static_cast<float>(rng.normal() * init_std);
  LoraAdapter adapter;
  adapter.A = nd::Parameter(std::move(a), true);
  adapter.B = nd::Parameter(nd::Tensor({d, rank}), true);
  adapter.rank = rank;
  adapter.alpha = alpha;
  return adapter;
}

bool rank_is_low(std::size_t d, std::size_t k, std::size_t rank) {
  return 4 * rank <= std::min(d, k);
}

std::uint64_t count_trainable(std::span<const std::pair<std::uint64_t, std::uint64_t>> layer_dims,
                              std::uint64_t rank) {
  std::uint64_t total = 0;
  for (const auto& [d, k] : layer_dims) {
    if (d == 0 || k == 0) throw ValidationError("layer dimensions must be positive");
    total += rank * (k + d);
  }
  return total;
}

namespace {

void check_bias(const nd::Tensor& bias, std::size_t d) {
  if (!bias.empty() && bias.size() != d) {
    throw DimensionError("bias length " + std::to_string(bias.size()) +
                         " does not match output width " + std::to_string(d));
  }
}

}  // namespace

AdaptedLinear::AdaptedLinear(nd::Tensor w0, nd::Tensor bias) {
  nd::expect_matrix(w0.shape(), "base weight");
  d_ = w0.rows();
  k_ = w0.cols();
  check_bias(bias, d_);
  base_ = nd::Parameter(std::move(w0), false);
  if (!bias.empty()) bias_ = nd::Parameter(std::move(bias), false);
  refresh_transpose();
}

AdaptedLinear::AdaptedLinear(quant::QuantizedMatrix w0, nd::Tensor bias) {
  nd::expect_matrix(w0.shape(), "base weight");
  d_ = w0.shape()[0];
  k_ = w0.shape()[1];
  check_bias(bias, d_);
  base_ = std::move(w0);
  if (!bias.empty()) bias_ = nd::Parameter(std::move(bias), false);
}

void AdaptedLinear::refresh_transpose() {
  if (const auto* p = std::get_if<nd::Parameter>(&base_)) base_t_ = nd::transpose(p->value);
}

void AdaptedLinear::attach(LoraAdapter adapter) {
  if (merged_) throw StateError("cannot attach an adapter to a merged layer");
  if (adapter.out_features() != d_ || adapter.in_features() != k_) {
    throw DimensionError("adapter shape [" + std::to_string(adapter.out_features()) + "x" +
                         std::to_string(adapter.in_features()) + "] does not match layer [" +
                         std::to_string(d_) + "x" + std::to_string(k_) + "]");
  }
  if (!rank_is_low(d_, k_, adapter.rank)) {
    log::warn("LoRA rank " + std::to_string(adapter.rank) + " is not well below min(d, k) = " +
              std::to_string(std::min(d_, k_)));
  }
  adapter_ = std::move(adapter);
}

nd::Tensor AdaptedLinear::base_weight() const {
  if (const auto* p = std::get_if<nd::Parameter>(&base_)) return p->value;
  return quant::dequantize(std::get<quant::QuantizedMatrix>(base_));
}

nd::Tensor AdaptedLinear::forward(const nd::Tensor& x, LinearCache* cache) const {
  nd::expect_matrix(x.shape(), "linear input");
  if (x.cols() != k_) {
    throw DimensionError("linear input " + nd::shape_string(x.shape()) + " does not match in_features " +
                         std::to_string(k_));
  }
  nd::Tensor y = quantized() ? nd::matmul(x, nd::transpose(base_weight())) : nd::matmul(x, base_t_);
  if (!bias_.value.empty()) nd::add_row_bias(y, bias_.value.data());
  if (adapter_ && !merged_) {
    nd::Tensor xa = nd::matmul_nt(x, adapter_->A.value);
    nd::Tensor delta = nd::matmul_nt(xa, adapter_->B.value);
    nd::axpy_inplace(y, adapter_->scaling(), delta);
    if (cache) cache->xa = std::move(xa);
  }
  if (cache) cache->x = x;
  return y;
}

nd::Tensor AdaptedLinear::forward_vector(std::span<const float> x) const {
  if (x.size() != k_) {
    throw DimensionError("input length " + std::to_string(x.size()) + " does not match k = " +
                         std::to_string(k_));
  }
  nd::Tensor row({1, k_}, std::vector<float>(x.begin(), x.end()));
  nd::Tensor y = forward(row);
  return nd::Tensor({d_}, std::move(y.storage()));
}

nd::Tensor AdaptedLinear::backward(const LinearCache& cache, const nd::Tensor& grad_y) {
  if (merged_) throw StateError("backward through a merged layer");
  nd::expect_matrix(grad_y.shape(), "linear grad");
  if (grad_y.cols() != d_ || grad_y.rows() != cache.x.rows()) {
    throw DimensionError("linear grad " + nd::shape_string(grad_y.shape()) + " does not match output");
  }
  nd::Tensor dx = nd::matmul(grad_y, base_weight());
  if (adapter_) {
    const float s = adapter_->scaling();
    nd::Tensor gb = nd::matmul(grad_y, adapter_->B.value);  // [T x r]
    nd::Tensor dB = nd::matmul_tn(grad_y, cache.xa);         // [d x r]
    nd::Tensor dA = nd::matmul_tn(gb, cache.x);              // [r x k]
    for (auto& v : dB.data()) v *= s;
    for (auto& v : dA.data()) v *= s;
    adapter_->B.accumulate(dB.data());
    adapter_->A.accumulate(dA.data());
    nd::axpy_inplace(dx, s, nd::matmul(gb, adapter_->A.value));
  }
  return dx;
}

nd::Tensor AdaptedLinear::delta_weight() const {
  nd::Tensor delta = nd::matmul(adapter_->B.value, adapter_->A.value);
  const float s = adapter_->scaling();
  for (auto& v : delta.data()) v *= s;
  return delta;
}

void AdaptedLinear::merge() {
  if (merged_) throw StateError("layer is already merged");
  if (!adapter_) throw StateError("no adapter to merge");
  auto* p = std::get_if<nd::Parameter>(&base_);
  if (!p) throw StateError("merge needs a full-precision base; dequantize the base first");
  nd::add_inplace(p->value, delta_weight());
  merged_ = true;
  refresh_transpose();
}

void AdaptedLinear::unmerge() {
  if (!merged_) throw StateError("layer is not merged");
  auto& p = std::get<nd::Parameter>(base_);
  nd::axpy_inplace(p.value, -1.0F, delta_weight());
  merged_ = false;
  refresh_transpose();
}

AdaptedLinear AdaptedLinear::merged_linear() const {
  if (merged_) throw StateError("layer is already merged");
  if (!adapter_) throw StateError("no adapter to merge");
  if (quantized()) throw StateError("merge needs a full-precision base; dequantize the base first");
  nd::Tensor w = base_weight();
  nd::add_inplace(w, delta_weight());
  return AdaptedLinear(std::move(w), bias_.value);
}

void AdaptedLinear::dequantize_base() {
  if (!quantized()) return;
  base_ = nd::Parameter(base_weight(), false);
  refresh_transpose();
}

}  // namespace lorascore::lora
