// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#include "lorascore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

namespace lorascore::nd {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void expect_matrix(const Shape& shape, const char* what) {
  if (shape.size() != 2) {
    throw DimensionError(std::string(what) + " must be a matrix, got " + shape_string(shape));
  }
}

namespace {

template <typename T>
void expect_same(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

// c[m x n] += a[m x k] * b[k x n], axpy form so the inner loop is contiguous.
template <typename T>
void gemm_nn_accumulate(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                        std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t t = 0; t < k; ++t) {
      const T av = arow[t];
      if (av == T{0}) continue;
      const T* brow = b + t * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
  expect_matrix(a.shape(), "transpose operand");
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  BasicTensor<T> out({n, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out(j, i) = a(i, j);
  }
  return out;
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  expect_matrix(a.shape(), "matmul lhs");
  expect_matrix(b.shape(), "matmul rhs");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul inner extents differ: " + shape_string(a.shape()) + " * " +
                         shape_string(b.shape()));
  }
  BasicTensor<T> c({a.rows(), b.cols()});
  gemm_nn_accumulate(a.data().data(), b.data().data(), c.data().data(), a.rows(), a.cols(),
                     b.cols());
  return c;
}

template <typename T>
BasicTensor<T> matmul_nt(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  expect_matrix(a.shape(), "matmul_nt lhs");
  expect_matrix(b.shape(), "matmul_nt rhs");
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt inner extents differ: " + shape_string(a.shape()) + " * " +
                         shape_string(b.shape()) + "^T");
  }
  return matmul(a, transpose(b));
}

template <typename T>
BasicTensor<T> matmul_tn(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  expect_matrix(a.shape(), "matmul_tn lhs");
  expect_matrix(b.shape(), "matmul_tn rhs");
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn inner extents differ: " + shape_string(a.shape()) + "^T * " +
                         shape_string(b.shape()));
  }
  const std::size_t k = a.rows();
  const std::size_t m = a.cols();
  const std::size_t n = b.cols();
  BasicTensor<T> c({m, n});
  T* cd = c.data().data();
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  for (std::size_t t = 0; t < k; ++t) {
    const T* arow = ad + t * m;
    const T* brow = bd + t * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = arow[i];
      if (av == T{0}) continue;
      T* crow = cd + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

template <typename T>
MatmulGrads<T> matmul_backward(const BasicTensor<T>& a, const BasicTensor<T>& b,
                               const BasicTensor<T>& grad_out) {
  expect_matrix(grad_out.shape(), "matmul grad");
  if (grad_out.rows() != a.rows() || grad_out.cols() != b.cols()) {
    throw DimensionError("matmul grad shape " + shape_string(grad_out.shape()) +
                         " does not match product of " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  return {matmul_nt(grad_out, b), matmul_tn(a, grad_out)};
}

template <typename T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& x) {
  expect_matrix(x.shape(), "softmax input");
  BasicTensor<T> y(x.shape());
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto out = y.row(r);
    const T mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = std::exp(static_cast<double>(in[j]) - static_cast<double>(mx));
      out[j] = static_cast<T>(e);
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < n; ++j) out[j] = static_cast<T>(static_cast<double>(out[j]) * inv);
  }
  return y;
}

template <typename T>
BasicTensor<T> softmax_rows_backward(const BasicTensor<T>& y, const BasicTensor<T>& grad_y) {
  expect_same(y, grad_y, "softmax backward");
  BasicTensor<T> gx(y.shape());
  const std::size_t n = y.cols();
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto yr = y.row(r);
    auto gr = grad_y.row(r);
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += static_cast<double>(yr[j]) * gr[j];
    auto out = gx.row(r);
    for (std::size_t j = 0; j < n; ++j) {
      out[j] = static_cast<T>(static_cast<double>(yr[j]) * (static_cast<double>(gr[j]) - dot));
    }
  }
  return gx;
}

template <typename T>
BasicTensor<T> rmsnorm(const BasicTensor<T>& x, std::span<const T> weight, double eps,
                       RmsNormCache<T>* cache) {
  expect_matrix(x.shape(), "rmsnorm input");
  const std::size_t n = x.cols();
  if (weight.size() != n) {
    throw DimensionError("rmsnorm weight length " + std::to_string(weight.size()) +
                         " does not match width " + std::to_string(n));
  }
  BasicTensor<T> y(x.shape());
  BasicTensor<T> normalized(x.shape());
  std::vector<double> inv_rms(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    double ss = 0.0;
    for (std::size_t j = 0; j < n; ++j) ss += static_cast<double>(in[j]) * in[j];
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(n) + eps);
    inv_rms[r] = inv;
    auto nr = normalized.row(r);
    auto out = y.row(r);
    for (std::size_t j = 0; j < n; ++j) {
      nr[j] = static_cast<T>(in[j] * inv);
      out[j] = nr[j] * weight[j];
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_rms = std::move(inv_rms);
  }
  return y;
}

template <typename T>
BasicTensor<T> rmsnorm_backward(const RmsNormCache<T>& cache, std::span<const T> weight,
                                const BasicTensor<T>& grad_y, std::span<T> grad_weight) {
  expect_same(cache.normalized, grad_y, "rmsnorm backward");
  const std::size_t n = grad_y.cols();
  BasicTensor<T> gx(grad_y.shape());
  std::vector<double> gn(n);
  for (std::size_t r = 0; r < grad_y.rows(); ++r) {
    auto g = grad_y.row(r);
    auto xh = cache.normalized.row(r);
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      gn[j] = static_cast<double>(g[j]) * weight[j];
      dot += gn[j] * xh[j];
      if (!grad_weight.empty()) grad_weight[j] += g[j] * xh[j];
    }
    const double mean = dot / static_cast<double>(n);
    const double inv = cache.inv_rms[r];
    auto out = gx.row(r);
    for (std::size_t j = 0; j < n; ++j) out[j] = static_cast<T>(inv * (gn[j] - xh[j] * mean));
  }
  return gx;
}

template <typename T>
BasicTensor<T> embedding(const BasicTensor<T>& table, std::span<const std::int32_t> ids) {
  expect_matrix(table.shape(), "embedding table");
  if (ids.empty()) throw DimensionError("embedding lookup needs at least one id");
  const std::size_t h = table.cols();
  BasicTensor<T> out({ids.size(), h});
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= table.rows()) {
      throw IndexError("token id " + std::to_string(ids[t]) + " outside vocabulary of " +
                       std::to_string(table.rows()));
    }
    auto src = table.row(static_cast<std::size_t>(ids[t]));
    std::copy(src.begin(), src.end(), out.row(t).begin());
  }
  return out;
}

template <typename T>
void embedding_backward(std::span<const std::int32_t> ids, const BasicTensor<T>& grad_out,
                        BasicTensor<T>& grad_table) {
  for (std::size_t t = 0; t < ids.size(); ++t) {
    auto dst = grad_table.row(static_cast<std::size_t>(ids[t]));
    auto src = grad_out.row(t);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
}

template <typename T>
LossResult<T> cross_entropy_masked(const BasicTensor<T>& logits,
                                   std::span<const std::int32_t> targets,
                                   std::span<const bool> mask) {
  expect_matrix(logits.shape(), "cross-entropy logits");
  const std::size_t rows = logits.rows();
  const std::size_t v = logits.cols();
  if (targets.size() != rows || mask.size() != rows) {
    throw DimensionError("cross-entropy expects " + std::to_string(rows) +
                         " targets and mask entries, got " + std::to_string(targets.size()) +
                         " and " + std::to_string(mask.size()));
  }
  std::size_t active = 0;
  for (std::size_t t = 0; t < rows; ++t) {
    if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= v) {
      throw IndexError("target " + std::to_string(targets[t]) + " at position " +
                       std::to_string(t) + " outside vocabulary of " + std::to_string(v));
    }
    if (mask[t]) ++active;
  }
  if (active == 0) throw ValidationError("cross-entropy mask selects no positions (empty loss)");

  LossResult<T> result{0.0, BasicTensor<T>(logits.shape())};
  const double scale = 1.0 / static_cast<double>(active);
  double total = 0.0;
  for (std::size_t t = 0; t < rows; ++t) {
    if (!mask[t]) continue;
    auto in = logits.row(t);
    const double mx = static_cast<double>(*std::max_element(in.begin(), in.end()));
    double sum = 0.0;
    for (std::size_t j = 0; j < v; ++j) sum += std::exp(static_cast<double>(in[j]) - mx);
    const double lse = mx + std::log(sum);
    const auto target = static_cast<std::size_t>(targets[t]);
    total += lse - static_cast<double>(in[target]);
    auto g = result.grad_logits.row(t);
    for (std::size_t j = 0; j < v; ++j) {
      const double p = std::exp(static_cast<double>(in[j]) - lse);
      g[j] = static_cast<T>((p - (j == target ? 1.0 : 0.0)) * scale);
    }
  }
  result.loss = total * scale;
  return result;
}

template <typename T>
BasicTensor<T> swiglu(const BasicTensor<T>& gate, const BasicTensor<T>& up) {
  expect_same(gate, up, "swiglu");
  BasicTensor<T> out(gate.shape());
  for (std::size_t i = 0; i < gate.size(); ++i) {
    const double g = gate[i];
    const double sig = 1.0 / (1.0 + std::exp(-g));
    out[i] = static_cast<T>(g * sig * static_cast<double>(up[i]));
  }
  return out;
}

template <typename T>
void swiglu_backward(const BasicTensor<T>& gate, const BasicTensor<T>& up,
                     const BasicTensor<T>& grad_out, BasicTensor<T>& grad_gate,
                     BasicTensor<T>& grad_up) {
  expect_same(gate, grad_out, "swiglu backward");
  grad_gate = BasicTensor<T>(gate.shape());
  grad_up = BasicTensor<T>(gate.shape());
  for (std::size_t i = 0; i < gate.size(); ++i) {
    const double g = gate[i];
    const double sig = 1.0 / (1.0 + std::exp(-g));
    const double silu = g * sig;
    const double dsilu = sig * (1.0 + g * (1.0 - sig));
    const double go = grad_out[i];
    grad_up[i] = static_cast<T>(go * silu);
    grad_gate[i] = static_cast<T>(go * static_cast<double>(up[i]) * dsilu);
  }
}

template <typename T>
void rope_inplace(BasicTensor<T>& x, std::size_t n_heads, std::size_t first_position, double base,
                  bool inverse) {
  expect_matrix(x.shape(), "rope input");
  const std::size_t width = x.cols();
  if (n_heads == 0 || width % n_heads != 0 || (width / n_heads) % 2 != 0) {
    throw DimensionError("rope needs an even head dimension; width " + std::to_string(width) +
                         " with " + std::to_string(n_heads) + " heads");
  }
  const std::size_t hd = width / n_heads;
  const double sign = inverse ? -1.0 : 1.0;
  for (std::size_t t = 0; t < x.rows(); ++t) {
    const double pos = static_cast<double>(first_position + t);
    auto row = x.row(t);
    for (std::size_t i = 0; i < hd / 2; ++i) {
      const double theta = pos * std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(hd));
      const double c = std::cos(theta);
      const double s = sign * std::sin(theta);
      for (std::size_t h = 0; h < n_heads; ++h) {
        T& a = row[h * hd + 2 * i];
        T& b = row[h * hd + 2 * i + 1];
        const double x0 = a;
        const double x1 = b;
        a = static_cast<T>(x0 * c - x1 * s);
        b = static_cast<T>(x0 * s + x1 * c);
      }
    }
  }
}

template <typename T>
BasicTensor<T> causal_attention(const BasicTensor<T>& q, const BasicTensor<T>& k,
                                const BasicTensor<T>& v, std::size_t n_heads,
                                AttentionCache<T>* cache) {
  expect_same(k, v, "attention k/v");
  expect_matrix(q.shape(), "attention q");
  if (q.cols() != k.cols() || q.rows() > k.rows()) {
    throw DimensionError("attention queries " + shape_string(q.shape()) + " do not fit keys " +
                         shape_string(k.shape()));
  }
  const std::size_t len = q.rows();
  const std::size_t klen = k.rows();
  const std::size_t first = klen - len;  // position of query row 0
  const std::size_t width = q.cols();
  if (n_heads == 0 || width % n_heads != 0) {
    throw DimensionError("attention width " + std::to_string(width) + " not divisible by " +
                         std::to_string(n_heads) + " heads");
  }
  const std::size_t hd = width / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  BasicTensor<T> out({len, width});
  if (cache) cache->probs.assign(n_heads, BasicTensor<T>());
  std::vector<double> scores(klen);
  for (std::size_t h = 0; h < n_heads; ++h) {
    BasicTensor<T> probs;
    if (cache) probs = BasicTensor<T>({len, klen});
    const std::size_t off = h * hd;
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t last = first + i;
      const T* qi = q.row(i).data() + off;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j <= last; ++j) {
        const T* kj = k.row(j).data() + off;
        double dot = 0.0;
        for (std::size_t d = 0; d < hd; ++d) dot += static_cast<double>(qi[d]) * kj[d];
        scores[j] = dot * inv_sqrt;
        mx = std::max(mx, scores[j]);
      }
      double sum = 0.0;
      for (std::size_t j = 0; j <= last; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        sum += scores[j];
      }
      T* oi = out.row(i).data() + off;
      for (std::size_t j = 0; j <= last; ++j) {
        const T p = static_cast<T>(scores[j] / sum);
        if (cache) probs(i, j) = p;
        const T* vj = v.row(j).data() + off;
        for (std::size_t d = 0; d < hd; ++d) oi[d] += p * vj[d];
      }
    }
    if (cache) cache->probs[h] = std::move(probs);
  }
  return out;
}

template <typename T>
AttentionGrads<T> causal_attention_backward(const BasicTensor<T>& q, const BasicTensor<T>& k,
                                            const BasicTensor<T>& v, std::size_t n_heads,
                                            const AttentionCache<T>& cache,
                                            const BasicTensor<T>& grad_out) {
  expect_same(q, grad_out, "attention backward");
  expect_same(q, k, "attention backward q/k");
  if (cache.probs.size() != n_heads) throw StateError("attention cache does not match head count");
  const std::size_t len = q.rows();
  const std::size_t width = q.cols();
  const std::size_t hd = width / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  AttentionGrads<T> g{BasicTensor<T>(q.shape()), BasicTensor<T>(q.shape()),
                      BasicTensor<T>(q.shape())};
  std::vector<double> dp(len);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const auto& probs = cache.probs[h];
    const std::size_t off = h * hd;
    for (std::size_t i = 0; i < len; ++i) {
      const T* goi = grad_out.row(i).data() + off;
      double dot = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        const T* vj = v.row(j).data() + off;
        double s = 0.0;
        for (std::size_t d = 0; d < hd; ++d) s += static_cast<double>(goi[d]) * vj[d];
        dp[j] = s;
        dot += s * probs(i, j);
      }
      const T* qi = q.row(i).data() + off;
      T* gqi = g.grad_q.row(i).data() + off;
      for (std::size_t j = 0; j <= i; ++j) {
        const double p = probs(i, j);
        T* gvj = g.grad_v.row(j).data() + off;
        for (std::size_t d = 0; d < hd; ++d) gvj[d] += static_cast<T>(p * goi[d]);
        const T ds = static_cast<T>(p * (dp[j] - dot) * inv_sqrt);
        const T* kj = k.row(j).data() + off;
        T* gkj = g.grad_k.row(j).data() + off;
        for (std::size_t d = 0; d < hd; ++d) {
          gqi[d] += ds * kj[d];
          gkj[d] += ds * qi[d];
        }
      }
    }
  }
  return g;
}

template <typename T>
void add_inplace(BasicTensor<T>& y, const BasicTensor<T>& x) {
  expect_same(y, x, "add");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
}

template <typename T>
void axpy_inplace(BasicTensor<T>& y, T alpha, const BasicTensor<T>& x) {
  expect_same(y, x, "axpy");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

template <typename T>
void add_row_bias(BasicTensor<T>& y, std::span<const T> bias) {
  expect_matrix(y.shape(), "bias target");
  if (bias.size() != y.cols()) {
    throw DimensionError("bias length " + std::to_string(bias.size()) + " does not match width " +
                         std::to_string(y.cols()));
  }
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t j = 0; j < bias.size(); ++j) row[j] += bias[j];
  }
}

#define LORASCORE_OPS_INSTANTIATE(T)                                                              \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template MatmulGrads<T> matmul_backward(const BasicTensor<T>&, const BasicTensor<T>&,           \
                                          const BasicTensor<T>&);                                 \
  template BasicTensor<T> matmul_nt(const BasicTensor<T>&, const BasicTensor<T>&);                \
  template BasicTensor<T> matmul_tn(const BasicTensor<T>&, const BasicTensor<T>&);                \
  template BasicTensor<T> transpose(const BasicTensor<T>&);                                       \
  template BasicTensor<T> softmax_rows(const BasicTensor<T>&);                                    \
  template BasicTensor<T> softmax_rows_backward(const BasicTensor<T>&, const BasicTensor<T>&);    \
  template BasicTensor<T> rmsnorm(const BasicTensor<T>&, std::span<const T>, double,              \
                                  RmsNormCache<T>*);                                              \
  template BasicTensor<T> rmsnorm_backward(const RmsNormCache<T>&, std::span<const T>,            \
                                           const BasicTensor<T>&, std::span<T>);                  \
  template BasicTensor<T> embedding(const BasicTensor<T>&, std::span<const std::int32_t>);        \
  template void embedding_backward(std::span<const std::int32_t>, const BasicTensor<T>&,          \
                                   BasicTensor<T>&);                                              \
  template LossResult<T> cross_entropy_masked(const BasicTensor<T>&,                              \
                                              std::span<const std::int32_t>,                      \
                                              std::span<const bool>);                             \
  template BasicTensor<T> swiglu(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template void swiglu_backward(const BasicTensor<T>&, const BasicTensor<T>&,                     \
                                const BasicTensor<T>&, BasicTensor<T>&, BasicTensor<T>&);         \
  template void rope_inplace(BasicTensor<T>&, std::size_t, std::size_t, double, bool);            \
  template BasicTensor<T> causal_attention(const BasicTensor<T>&, const BasicTensor<T>&,          \
                                           const BasicTensor<T>&, std::size_t,                    \
                                           AttentionCache<T>*);                                   \
  template AttentionGrads<T> causal_attention_backward(                                           \
      const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, std::size_t,           \
      const AttentionCache<T>&, const BasicTensor<T>&);                                           \
  template void add_inplace(BasicTensor<T>&, const BasicTensor<T>&);                              \
  template void axpy_inplace(BasicTensor<T>&, T, const BasicTensor<T>&);                          \
  template void add_row_bias(BasicTensor<T>&, std::span<const T>);

LORASCORE_OPS_INSTANTIATE(float)
LORASCORE_OPS_INSTANTIATE(double)

}  // namespace lorascore::nd
