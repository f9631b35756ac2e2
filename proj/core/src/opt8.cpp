// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#include "lorascore/opt8.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lorascore::quant {

DynamicMap8::DynamicMap8(bool is_signed, double decades) {
  // Magnitudes 10^(-decades) .. 1, log-spaced, plus an exact zero.
  const std::size_t per_sign = is_signed ? 127 : 255;
  std::vector<double> mags(per_sign);
  for (std::size_t j = 0; j < per_sign; ++j) {
    const double frac = static_cast<double>(j) / static_cast<double>(per_sign - 1);
    mags[j] = std::pow(10.0, -decades * (1.0 - frac));
  }
  std::vector<float> vals;
  vals.push_back(0.0F);
  for (const double m : mags) {
    vals.push_back(static_cast<float>(m));
    if (is_signed) vals.push_back(static_cast<float>(-m));
  }
  std::sort(vals.begin(), vals.end());
  // The top magnitude must be exactly 1 so the block absmax round-trips.
  for (float& v : vals) {
    if (std::fabs(std::fabs(v) - 1.0F) < 1e-6F) v = v < 0 ? -1.0F : 1.0F;
  }
  used_ = vals.size();
  std::copy(vals.begin(), vals.end(), values_.begin());
  for (std::size_t i = used_; i < values_.size(); ++i) values_[i] = values_[used_ - 1];
}

const DynamicMap8& DynamicMap8::signed_map() {
  static const DynamicMap8 map(true, 7.0);
  return map;
}

const DynamicMap8& DynamicMap8::unsigned_map() {
  static const DynamicMap8 map(false, 7.0);
  return map;
}

std::uint8_t DynamicMap8::encode(float x) const {
  const auto begin = values_.begin();
  const auto end = values_.begin() + static_cast<std::ptrdiff_t>(used_);
  const auto it = std::lower_bound(begin, end, x);
  if (it == begin) return 0;
  if (it == end) return static_cast<std::uint8_t>(used_ - 1);
  const auto hi = static_cast<std::size_t>(it - begin);
  const std::size_t lo = hi - 1;
  return (x - values_[lo] <= values_[hi] - x) ? static_cast<std::uint8_t>(lo)
                                              : static_cast<std::uint8_t>(hi);
}

Opt8State Opt8State::create(const nd::Shape& shape, MomentStorage storage,
                            std::size_t block_size) {
  if (block_size == 0) throw ValidationError("optimizer state block size must be >= 1");
  Opt8State s;
  s.shape = shape;
  s.storage = storage;
  s.block_size = block_size;
  const std::size_t n = nd::shape_product(shape);
  if (storage == MomentStorage::kFloat32) {
    s.m32.assign(n, 0.0F);
    s.v32.assign(n, 0.0F);
  } else {
    const std::size_t nb = (n + block_size - 1) / block_size;
    s.m8.assign(n, DynamicMap8::signed_map().encode(0.0F));
    s.v8.assign(n, DynamicMap8::unsigned_map().encode(0.0F));
    s.m_scale.assign(nb, 0.0F);
    s.v_scale.assign(nb, 0.0F);
  }
  return s;
}

namespace {

void decode_block(const DynamicMap8& map, const std::vector<std::uint8_t>& codes, float scale,
                  std::size_t begin, std::size_t end, std::vector<float>& out) {
  for (std::size_t i = begin; i < end; ++i) out[i - begin] = map.decode(codes[i]) * scale;
}

void encode_block(const DynamicMap8& map, const std::vector<float>& values, std::size_t begin,
                  std::vector<std::uint8_t>& codes, float& scale) {
  float mx = 0.0F;
  for (const float v : values) mx = std::max(mx, std::fabs(v));
  scale = mx;
  for (std::size_t i = 0; i < values.size(); ++i) {
    codes[begin + i] = map.encode(mx == 0.0F ? 0.0F : values[i] / mx);
  }
}

}  // namespace

std::vector<float> Opt8State::first_moment() const {
  if (storage == MomentStorage::kFloat32) return m32;
  std::vector<float> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = DynamicMap8::signed_map().decode(m8[i]) * m_scale[i / block_size];
  }
  return out;
}

std::vector<float> Opt8State::second_moment() const {
  if (storage == MomentStorage::kFloat32) return v32;
  std::vector<float> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = DynamicMap8::unsigned_map().decode(v8[i]) * v_scale[i / block_size];
  }
  return out;
}

std::size_t Opt8State::storage_bytes() const {
  return (m32.size() + v32.size()) * sizeof(float) + m8.size() + v8.size() +
         (m_scale.size() + v_scale.size()) * sizeof(float);
}

void opt8_step(nd::Parameter& p, Opt8State& state, const AdamWConfig& config) {
  if (!p.trainable) throw StateError("optimizer step on a frozen parameter");
  if (state.shape != p.value.shape()) {
    throw DimensionError("optimizer state shape " + nd::shape_string(state.shape) +
                         " does not match parameter " + nd::shape_string(p.value.shape()));
  }
  const auto grad = p.grad.data();
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw NumericError("non-finite gradient at element " + std::to_string(i) +
                         "; optimizer step rejected");
    }
  }

  const std::uint64_t t = state.step_count + 1;
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(t));
  auto value = p.value.data();

  // Moments are stored in float; the arithmetic runs in double.
  auto update = [&](std::size_t i, float& m, float& v) {
    const double g = grad[i];
    const double m1 = b1 * m + (1.0 - b1) * g;
    const double v1 = b2 * v + (1.0 - b2) * g * g;
    m = static_cast<float>(m1);
    v = static_cast<float>(v1);
    const double step = m1 / bias1 / (std::sqrt(v1 / bias2) + config.eps) + config.weight_decay * value[i];
    value[i] = static_cast<float>(value[i] - config.lr * step);
  };

  if (state.storage == MomentStorage::kFloat32) {
    for (std::size_t i = 0; i < grad.size(); ++i) update(i, state.m32[i], state.v32[i]);
  } else {
    const auto& smap = DynamicMap8::signed_map();
    const auto& umap = DynamicMap8::unsigned_map();
    const std::size_t n = grad.size();
    std::vector<float> m(state.block_size);
    std::vector<float> v(state.block_size);
    for (std::size_t b = 0; b * state.block_size < n; ++b) {
      const std::size_t begin = b * state.block_size;
      const std::size_t end = std::min(begin + state.block_size, n);
      m.resize(end - begin);
      v.resize(end - begin);
      decode_block(smap, state.m8, state.m_scale[b], begin, end, m);
      decode_block(umap, state.v8, state.v_scale[b], begin, end, v);
      for (std::size_t i = begin; i < end; ++i) update(i, m[i - begin], v[i - begin]);
      encode_block(smap, m, begin, state.m8, state.m_scale[b]);
      encode_block(umap, v, begin, state.v8, state.v_scale[b]);
    }
  }
  state.step_count = t;
}

}  // namespace lorascore::quant
