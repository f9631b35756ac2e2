// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Reference implementations written independently of the library, used as
// test oracles. Nothing here calls into lorascore.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace oracle {

// Quadratic weighted kappa straight from the textbook definition: joint
// proportions O, outer product of marginals E, weights (i-j)^2/(K-1)^2.
inline long double brute_qwk(std::span<const int> a, std::span<const int> b, int lo, int hi) {
  const int k = hi - lo + 1;
  const long double n = static_cast<long double>(a.size());
  std::vector<long double> o(static_cast<std::size_t>(k * k), 0.0L);
  std::vector<long double> ra(static_cast<std::size_t>(k), 0.0L), rb(static_cast<std::size_t>(k), 0.0L);
  for (std::size_t t = 0; t < a.size(); ++t) {
    o[static_cast<std::size_t>((a[t] - lo) * k + (b[t] - lo))] += 1.0L / n;
    ra[static_cast<std::size_t>(a[t] - lo)] += 1.0L / n;
    rb[static_cast<std::size_t>(b[t] - lo)] += 1.0L / n;
  }
  long double num = 0.0L, den = 0.0L;
  const long double norm = static_cast<long double>(k - 1) * static_cast<long double>(k - 1);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const long double w = static_cast<long double>((i - j) * (i - j)) / norm;
      num += w * o[static_cast<std::size_t>(i * k + j)];
      den += w * ra[static_cast<std::size_t>(i)] * rb[static_cast<std::size_t>(j)];
    }
  }
  if (den == 0.0L && num == 0.0L) return 1.0L;
  return 1.0L - num / den;
}

// 16 evenly spaced levels on [-1, 1] with per-block absmax scaling.
inline std::vector<float> uniform_int4_roundtrip(std::span<const float> x, std::size_t block) {
  std::vector<float> out(x.size());
  for (std::size_t start = 0; start < x.size(); start += block) {
    const std::size_t end = std::min(start + block, x.size());
    float scale = 0.0F;
    for (std::size_t i = start; i < end; ++i) scale = std::max(scale, std::fabs(x[i]));
    for (std::size_t i = start; i < end; ++i) {
      if (scale == 0.0F) {
        out[i] = 0.0F;
        continue;
      }
      const double u = static_cast<double>(x[i]) / scale;  // [-1, 1]
      const double j = std::round((u + 1.0) * 7.5);          // 0..15
      out[i] = static_cast<float>((-1.0 + j / 7.5) * scale);
    }
  }
  return out;
}

inline std::vector<long double> softmax(std::span<const double> row) {
  long double mx = row[0];
  for (const double v : row) mx = std::max<long double>(mx, v);
  std::vector<long double> e(row.size());
  long double sum = 0.0L;
  for (std::size_t i = 0; i < row.size(); ++i) {
    e[i] = std::exp(static_cast<long double>(row[i]) - mx);
    sum += e[i];
  }
  for (auto& v : e) v /= sum;
  return e;
}

// Mean over masked rows of -log p(target).
inline long double masked_cross_entropy(const std::vector<std::vector<double>>& logits,
                                        std::span<const int> targets, std::span<const bool> mask) {
  long double total = 0.0L;
  std::size_t count = 0;
  for (std::size_t t = 0; t < logits.size(); ++t) {
    if (!mask[t]) continue;
    long double mx = logits[t][0];
    for (const double v : logits[t]) mx = std::max<long double>(mx, v);
    long double sum = 0.0L;
    for (const double v : logits[t]) sum += std::exp(static_cast<long double>(v) - mx);
    total += -(static_cast<long double>(logits[t][static_cast<std::size_t>(targets[t])]) - mx - std::log(sum));
    ++count;
  }
  return total / static_cast<long double>(count);
}

// Scalar decoupled-weight-decay Adam, everything in double.
struct ScalarAdamW {
  double lr, beta1, beta2, eps, weight_decay;
  double m = 0.0, v = 0.0;
  std::uint64_t t = 0;

  double step(double p, double g) {
    ++t;
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g * g;
    const double mh = m / (1.0 - std::pow(beta1, static_cast<double>(t)));
    const double vh = v / (1.0 - std::pow(beta2, static_cast<double>(t)));
    return p - lr * (mh / (std::sqrt(vh) + eps) + weight_decay * p);
  }
};

}  // namespace oracle
