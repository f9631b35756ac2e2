// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#include "lorascore/nf4.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lorascore::quant {

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ValidationError("normal_quantile needs p in (0, 1)");
  auto cdf = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
  double lo = -40.0;
  double hi = 40.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (cdf(mid) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

std::array<float, 16> generate_nf4_levels() {
  // Tail probability halfway between the 15- and 16-level choices.
  const double offset = 0.5 * ((1.0 - 1.0 / 30.0) + (1.0 - 1.0 / 32.0));
  auto spaced = [&](int count, int i) {
    return offset + (0.5 - offset) * static_cast<double>(i) / static_cast<double>(count - 1);
  };
  std::array<double, 16> raw{};
  std::size_t n = 0;
  for (int i = 0; i < 8; ++i) raw[n++] = normal_quantile(spaced(9, i));
  for (int i = 0; i < 7; ++i) raw[n++] = -normal_quantile(spaced(8, i));
  raw[n++] = 0.0;
  std::sort(raw.begin(), raw.end());
  const double mx = raw.back();
  std::array<float, 16> levels{};
  for (std::size_t i = 0; i < 16; ++i) levels[i] = static_cast<float>(raw[i] / mx);
  levels.front() = -1.0F;
  levels.back() = 1.0F;
  return levels;
}

const NF4Codebook& NF4Codebook::standard() {
  static const NF4Codebook book(generate_nf4_levels());
  return book;
}

NF4Codebook::NF4Codebook(std::array<float, 16> levels) : levels_(levels) {
  bool has_zero = false;
  for (std::size_t i = 0; i < 16; ++i) {
    if (i && !(levels_[i] > levels_[i - 1])) throw ValidationError("codebook levels must increase");
    if (levels_[i] == 0.0F) {
      has_zero = true;
      zero_code_ = static_cast<std::uint8_t>(i);
    }
  }
  if (levels_.front() != -1.0F || levels_.back() != 1.0F || !has_zero) {
    throw ValidationError("codebook must contain -1, 0 and +1 exactly");
  }
  for (std::size_t i = 1; i < 16; ++i) {
    max_half_gap_ = std::max(max_half_gap_, 0.5F * (levels_[i] - levels_[i - 1]));
  }
}

float NF4Codebook::level(std::uint8_t code) const {
  if (code >= 16) throw DecodeError("NF4 code " + std::to_string(code) + " out of range");
  return levels_[code];
}

std::uint8_t NF4Codebook::nearest(float normalized) const {
  const auto it = std::upper_bound(levels_.begin(), levels_.end(), normalized);
  if (it == levels_.begin()) return 0;
  if (it == levels_.end()) return 15;
  const auto hi = static_cast<std::size_t>(it - levels_.begin());
  const std::size_t lo = hi - 1;
  const double dlo = static_cast<double>(normalized) - levels_[lo];
  const double dhi = static_cast<double>(levels_[hi]) - normalized;
  if (dlo < dhi) return static_cast<std::uint8_t>(lo);
  if (dhi < dlo) return static_cast<std::uint8_t>(hi);
  return std::fabs(levels_[lo]) <= std::fabs(levels_[hi]) ? static_cast<std::uint8_t>(lo)
                                                          : static_cast<std::uint8_t>(hi);
}

std::size_t QuantizedMatrix::block_count() const noexcept {
  return options_.block_size == 0 ? 0 : (count_ + options_.block_size - 1) / options_.block_size;
}

std::size_t QuantizedMatrix::group_count() const noexcept {
  if (!options_.double_quant || options_.constant_group == 0) return 0;
  return (block_count() + options_.constant_group - 1) / options_.constant_group;
}

std::uint8_t QuantizedMatrix::code(std::size_t i) const {
  const std::uint8_t byte = packed_[i / 2];
  return (i % 2 == 0) ? static_cast<std::uint8_t>(byte & 0x0F) : static_cast<std::uint8_t>(byte >> 4);
}

std::vector<std::uint8_t> QuantizedMatrix::unpacked_codes() const {
  std::vector<std::uint8_t> out(count_);
  for (std::size_t i = 0; i < count_; ++i) out[i] = code(i);
  return out;
}

float QuantizedMatrix::block_scale(std::size_t b) const {
  if (!options_.double_quant) return absmax_[b];
  const std::size_t g = b / options_.constant_group;
  const float t = static_cast<float>(absmax_q_[b]) / 255.0F;
  return std::lerp(group_min_[g], group_max_[g], t);
}

std::size_t QuantizedMatrix::storage_bytes() const noexcept {
  return packed_.size() + absmax_.size() * sizeof(float) + absmax_q_.size() +
         (group_min_.size() + group_max_.size()) * sizeof(float);
}

void QuantizedMatrix::validate() const {
  if (options_.block_size == 0) throw DecodeError("quantized matrix has block size 0");
  if (count_ != nd::shape_product(shape_)) throw DecodeError("quantized element count mismatch");
  if (packed_.size() != (count_ + 1) / 2) throw DecodeError("quantized code buffer has wrong length");
  const std::size_t nb = block_count();
  if (options_.double_quant) {
    if (options_.constant_group == 0) throw DecodeError("constant group size 0");
    if (absmax_q_.size() != nb) throw DecodeError("block constant code count mismatch");
    if (group_min_.size() != group_count() || group_max_.size() != group_count()) {
      throw DecodeError("group metadata count mismatch");
    }
    for (std::size_t g = 0; g < group_min_.size(); ++g) {
      if (!std::isfinite(group_min_[g]) || !std::isfinite(group_max_[g]) || group_min_[g] < 0.0F ||
          group_max_[g] < group_min_[g]) {
        throw DecodeError("invalid group metadata at group " + std::to_string(g));
      }
    }
  } else {
    if (absmax_.size() != nb) throw DecodeError("block constant count mismatch");
    for (const float s : absmax_) {
      if (!std::isfinite(s) || s < 0.0F) throw DecodeError("invalid block constant");
    }
  }
}

QuantizedMatrix QuantizedMatrix::from_parts(nd::Shape shape, QuantOptions options,
                                            std::span<const std::uint8_t> codes,
                                            std::vector<float> absmax,
                                            std::vector<std::uint8_t> absmax_q,
                                            std::vector<float> group_min,
                                            std::vector<float> group_max) {
  QuantizedMatrix q;
  q.shape_ = std::move(shape);
  q.count_ = nd::shape_product(q.shape_);
  q.options_ = options;
  if (codes.size() != q.count_) {
    throw DecodeError("expected " + std::to_string(q.count_) + " codes, got " +
                      std::to_string(codes.size()));
  }
  q.packed_.assign((q.count_ + 1) / 2, 0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] >= 16) {
      throw DecodeError("corrupted NF4 code " + std::to_string(codes[i]) + " at element " +
                        std::to_string(i));
    }
    q.packed_[i / 2] |= static_cast<std::uint8_t>(i % 2 == 0 ? codes[i] : codes[i] << 4);
  }
  q.absmax_ = std::move(absmax);
  q.absmax_q_ = std::move(absmax_q);
  q.group_min_ = std::move(group_min);
  q.group_max_ = std::move(group_max);
  q.validate();
  return q;
}

QuantizedMatrix quantize_nf4(const nd::Tensor& m, const QuantOptions& options) {
  if (options.block_size == 0) throw ValidationError("block_size must be >= 1");
  if (options.double_quant && options.constant_group == 0) {
    throw ValidationError("constant_group must be >= 1");
  }
  if (!m.all_finite()) throw ValidationError("cannot quantize non-finite values");
  const auto& book = NF4Codebook::standard();

  QuantizedMatrix q;
  q.shape_ = m.shape();
  q.count_ = m.size();
  q.options_ = options;
  q.packed_.assign((q.count_ + 1) / 2, 0);

  const auto values = m.data();
  const std::size_t nb = q.block_count();
  std::vector<float> absmax(nb, 0.0F);
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t begin = b * options.block_size;
    const std::size_t end = std::min(begin + options.block_size, q.count_);
    float mx = 0.0F;
    for (std::size_t i = begin; i < end; ++i) mx = std::max(mx, std::fabs(values[i]));
    absmax[b] = mx;
    for (std::size_t i = begin; i < end; ++i) {
      const std::uint8_t c = mx == 0.0F ? book.zero_code() : book.nearest(values[i] / mx);
      q.packed_[i / 2] |= static_cast<std::uint8_t>(i % 2 == 0 ? c : c << 4);
    }
  }

  if (!options.double_quant) {
    q.absmax_ = std::move(absmax);
    return q;
  }
  const std::size_t groups = (nb + options.constant_group - 1) / options.constant_group;
  q.absmax_q_.assign(nb, 0);
  q.group_min_.assign(groups, 0.0F);
  q.group_max_.assign(groups, 0.0F);
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t begin = g * options.constant_group;
    const std::size_t end = std::min(begin + options.constant_group, nb);
    const auto [lo, hi] = std::minmax_element(absmax.begin() + static_cast<std::ptrdiff_t>(begin),
                                              absmax.begin() + static_cast<std::ptrdiff_t>(end));
    q.group_min_[g] = *lo;
    q.group_max_[g] = *hi;
    const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
    for (std::size_t b = begin; b < end; ++b) {
      if (range <= 0.0) continue;
      const double t = (static_cast<double>(absmax[b]) - *lo) / range;
      q.absmax_q_[b] = static_cast<std::uint8_t>(std::clamp(std::lround(t * 255.0), 0L, 255L));
    }
  }
  return q;
}

nd::Tensor dequantize(const QuantizedMatrix& q) {
  q.validate();
  const auto& book = NF4Codebook::standard();
  nd::Tensor out(q.shape());
  auto dst = out.data();
  const std::size_t bs = q.options().block_size;
  for (std::size_t b = 0; b < q.block_count(); ++b) {
    const float scale = q.block_scale(b);
    const std::size_t begin = b * bs;
    const std::size_t end = std::min(begin + bs, q.size());
    for (std::size_t i = begin; i < end; ++i) dst[i] = book.level(q.code(i)) * scale;
  }
  return out;
}

}  // namespace lorascore::quant
