// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Dense kernels with explicit forward/backward pairs for the toy decoder.
//
// Reduction order is fixed: matrix products accumulate over the inner index
// in ascending order in the element type; row reductions (softmax sums, RMS,
// log-sum-exp, losses) accumulate in double in ascending column order. Every
// output row depends only on the matching input row, which is what makes the
// decoder's causality checks bit-exact.
//
// Kernels are templates instantiated for float (the compute type) and double
// (used by the finite-difference tests).

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lorascore/tensor.hpp"

namespace lorascore::nd {

template <typename T>
struct MatmulGrads {
  BasicTensor<T> grad_a;
  BasicTensor<T> grad_b;
};

// c = a[m x k] * b[k x n]
template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

// grad_a = grad_out * b^T, grad_b = a^T * grad_out
template <typename T>
MatmulGrads<T> matmul_backward(const BasicTensor<T>& a, const BasicTensor<T>& b,
                               const BasicTensor<T>& grad_out);

// c = a[m x k] * b[n x k]^T
template <typename T>
BasicTensor<T> matmul_nt(const BasicTensor<T>& a, const BasicTensor<T>& b);

// c = a[k x m]^T * b[k x n]
template <typename T>
BasicTensor<T> matmul_tn(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a);

// Row-wise softmax with max subtraction.
template <typename T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& x);

// Given y = softmax_rows(x) and dL/dy, returns dL/dx.
template <typename T>
BasicTensor<T> softmax_rows_backward(const BasicTensor<T>& y, const BasicTensor<T>& grad_y);

template <typename T>
struct RmsNormCache {
  BasicTensor<T> normalized;   // x / rms, before the weight
  std::vector<double> inv_rms;  // one per row
};

template <typename T>
BasicTensor<T> rmsnorm(const BasicTensor<T>& x, std::span<const T> weight, double eps,
                       RmsNormCache<T>* cache);

// Returns dL/dx; adds dL/dweight into grad_weight when it is non-empty.
template <typename T>
BasicTensor<T> rmsnorm_backward(const RmsNormCache<T>& cache, std::span<const T> weight,
                                const BasicTensor<T>& grad_y, std::span<T> grad_weight);

template <typename T>
BasicTensor<T> embedding(const BasicTensor<T>& table, std::span<const std::int32_t> ids);

// Scatter-adds grad rows into grad_table.
template <typename T>
void embedding_backward(std::span<const std::int32_t> ids, const BasicTensor<T>& grad_out,
                        BasicTensor<T>& grad_table);

template <typename T>
struct LossResult {
  double loss = 0.0;
  BasicTensor<T> grad_logits;  // gradient of the mean loss; zero on unmasked rows
};

// Mean over masked rows of -log softmax(logits[t])[targets[t]].
template <typename T>
LossResult<T> cross_entropy_masked(const BasicTensor<T>& logits,
                                   std::span<const std::int32_t> targets,
                                   std::span<const bool> mask);

// h = silu(gate) * up, element-wise.
template <typename T>
BasicTensor<T> swiglu(const BasicTensor<T>& gate, const BasicTensor<T>& up);

template <typename T>
void swiglu_backward(const BasicTensor<T>& gate, const BasicTensor<T>& up,
                     const BasicTensor<T>& grad_out, BasicTensor<T>& grad_gate,
                     BasicTensor<T>& grad_up);

// Rotary position embedding over interleaved pairs inside each head.
// Row t receives position first_position + t. inverse=true applies the
// transpose rotation, which is also the backward pass.
template <typename T>
void rope_inplace(BasicTensor<T>& x, std::size_t n_heads, std::size_t first_position, double base,
                  bool inverse);

template <typename T>
struct AttentionCache {
  std::vector<BasicTensor<T>> probs;  // per head, [T x T] causal probabilities
};

// Causal multi-head attention over already-projected q [n x H] and k, v
// [L x H], L >= n. Query row i sits at position L - n + i, so n == L is the
// ordinary full-sequence case and n < L continues from cached keys.
template <typename T>
BasicTensor<T> causal_attention(const BasicTensor<T>& q, const BasicTensor<T>& k,
                                const BasicTensor<T>& v, std::size_t n_heads,
                                AttentionCache<T>* cache);

template <typename T>
struct AttentionGrads {
  BasicTensor<T> grad_q;
  BasicTensor<T> grad_k;
  BasicTensor<T> grad_v;
};

template <typename T>
AttentionGrads<T> causal_attention_backward(const BasicTensor<T>& q, const BasicTensor<T>& k,
                                            const BasicTensor<T>& v, std::size_t n_heads,
                                            const AttentionCache<T>& cache,
                                            const BasicTensor<T>& grad_out);

// In-place y += x (same shape).
template <typename T>
void add_inplace(BasicTensor<T>& y, const BasicTensor<T>& x);

// In-place y += alpha * x (same shape).
template <typename T>
void axpy_inplace(BasicTensor<T>& y, T alpha, const BasicTensor<T>& x);

// Adds bias[n] to every row of y[m x n].
template <typename T>
void add_row_bias(BasicTensor<T>& y, std::span<const T> bias);

void expect_matrix(const Shape& shape, const char* what);

#define LORASCORE_OPS_EXTERN(T)                                                                  \
  extern template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);           \
  extern template MatmulGrads<T> matmul_backward(const BasicTensor<T>&, const BasicTensor<T>&,   \
                                                 const BasicTensor<T>&);                         \
  extern template BasicTensor<T> matmul_nt(const BasicTensor<T>&, const BasicTensor<T>&);        \
  extern template BasicTensor<T> matmul_tn(const BasicTensor<T>&, const BasicTensor<T>&);        \
  extern template BasicTensor<T> transpose(const BasicTensor<T>&);                               \
  extern template BasicTensor<T> softmax_rows(const BasicTensor<T>&);                            \
  extern template BasicTensor<T> softmax_rows_backward(const BasicTensor<T>&,                    \
                                                       const BasicTensor<T>&);                   \
  extern template BasicTensor<T> rmsnorm(const BasicTensor<T>&, std::span<const T>, double,      \
                                         RmsNormCache<T>*);                                      \
  extern template BasicTensor<T> rmsnorm_backward(const RmsNormCache<T>&, std::span<const T>,    \
                                                  const BasicTensor<T>&, std::span<T>);          \
  extern template BasicTensor<T> embedding(const BasicTensor<T>&, std::span<const std::int32_t>);\
  extern template void embedding_backward(std::span<const std::int32_t>, const BasicTensor<T>&,  \
                                          BasicTensor<T>&);                                      \
  extern template LossResult<T> cross_entropy_masked(                                            \
      const BasicTensor<T>&, std::span<const std::int32_t>, std::span<const bool>);              \
  extern template BasicTensor<T> swiglu(const BasicTensor<T>&, const BasicTensor<T>&);           \
  extern template void swiglu_backward(const BasicTensor<T>&, const BasicTensor<T>&,             \
                                       const BasicTensor<T>&, BasicTensor<T>&, BasicTensor<T>&); \
  extern template void rope_inplace(BasicTensor<T>&, std::size_t, std::size_t, double, bool);    \
  extern template BasicTensor<T> causal_attention(const BasicTensor<T>&, const BasicTensor<T>&,  \
                                                  const BasicTensor<T>&, std::size_t,            \
                                                  AttentionCache<T>*);                           \
  extern template AttentionGrads<T> causal_attention_backward(                                   \
      const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, std::size_t,          \
      const AttentionCache<T>&, const BasicTensor<T>&);                                          \
  extern template void add_inplace(BasicTensor<T>&, const BasicTensor<T>&);                      \
  extern template void axpy_inplace(BasicTensor<T>&, T, const BasicTensor<T>&);                  \
  extern template void add_row_bias(BasicTensor<T>&, std::span<const T>);

LORASCORE_OPS_EXTERN(float)
LORASCORE_OPS_EXTERN(double)

#undef LORASCORE_OPS_EXTERN

}  // namespace lorascore::nd
