// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lorascore/lora.hpp"
#include "lorascore/nf4.hpp"
#include "lorascore/ops.hpp"
#include "lorascore/tensor.hpp"
#include "lorascore/tokenizer.hpp"

namespace lorascore::glm {

struct ModelConfig {
  std::size_t n_layers = 4;
  std::size_t hidden_size = 128;
  std::size_t intermediate_size = 448;
  std::size_t n_heads = 4;
  std::size_t vocab_size = 2048;
  std::size_t max_context = 2048;
  double rope_base = 10000.0;
  double norm_eps = 1e-5;
  double init_std = 0.02;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Pre-norm decoder block: RMSNorm, rotary causal attention, RMSNorm, SwiGLU.
struct Block {
  nd::Tensor attn_norm;  // [H]
  nd::Tensor ffn_norm;   // [H]
  lora::AdaptedLinear q, k, v, o;
  lora::AdaptedLinear gate, up, down;
};

struct BlockCache {
  nd::RmsNormCache<float> norm1, norm2;
  lora::LinearCache lq, lk, lv, lo, lgate, lup, ldown;
  nd::Tensor q, k, v;  // after rotation
  nd::AttentionCache<float> attn;
  nd::Tensor gate, up;
};

struct ForwardCache {
  std::vector<BlockCache> blocks;
  std::vector<std::size_t> rows;  // positions whose logits were produced
  nd::RmsNormCache<float> final_norm;
  std::size_t length = 0;
};

struct NamedLayer {
  std::string name;
  lora::AdaptedLinear* layer;
};

enum class DecodeMode { kGreedy, kSample };
enum class StopReason { kMaxTokens, kStopToken, kContextFull };

struct GenerateOptions {
  std::size_t max_new_tokens = 1;
  DecodeMode mode = DecodeMode::kGreedy;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  std::vector<TokenId> stop_tokens = {kEosId};
};

struct Generation {
  std::vector<TokenId> tokens;  // ends with the stop token when one was hit
  StopReason stop = StopReason::kMaxTokens;
};

// Per-layer keys and values for incremental decoding.
struct KvCache {
  std::vector<std::vector<float>> keys, values;  // per block, row-major [len x H]
  std::size_t length = 0;
};

// Decoder-only language model with a frozen base. Adapters can be attached
// to every projection in every block; embeddings, norms and the output head
// stay full precision and frozen.
class Model {
 public:
  static Model random(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }

  // Converts the block projections to NF4.
  void quantize_base(const quant::QuantOptions& options = {});
  bool base_quantized() const;

  // Logits [T x V] for every position.
  nd::Tensor forward(std::span<const TokenId> ids) const;
  // Logits only at the given positions, keeping what backward() needs.
  nd::Tensor forward_train(std::span<const TokenId> ids, std::span<const std::size_t> rows,
                           ForwardCache& cache) const;
  // Accumulates adapter gradients from dLoss/dLogits at the cached rows.
  void backward(const ForwardCache& cache, const nd::Tensor& grad_logits);

  // Logits [1 x V] for the last of the new ids, extending the cache.
  nd::Tensor extend(std::span<const TokenId> ids, KvCache& kv) const;
  Generation generate(std::span<const TokenId> prompt, const GenerateOptions& options) const;

  void attach_adapters(std::size_t rank, double alpha, Rng& rng,
                       double init_std = lora::kDefaultInitStd);
  bool has_adapters() const;
  // "layers.{i}.{q,k,v,o,gate,up,down}" in a fixed order.
  std::vector<NamedLayer> adapted_layers();
  std::vector<std::pair<std::string, const lora::AdaptedLinear*>> adapted_layers() const;
  void zero_adapter_grads();
  std::uint64_t adapter_parameter_count() const;

  std::uint64_t base_parameter_count() const;
  // Hash over the serialized base; adapters are excluded.
  std::uint64_t base_fingerprint() const;

  std::string serialize_base() const;
  static Model deserialize_base(std::string_view bytes);
  void save(const std::string& path) const;
  static Model load(const std::string& path);

  const nd::Tensor& embedding_table() const { return embed_; }
  const std::vector<Block>& blocks() const { return blocks_; }

 private:
  nd::Tensor block_forward(const Block& b, const nd::Tensor& x, std::size_t first_position,
                           std::vector<float>* keys, std::vector<float>* values,
                           BlockCache* cache) const;
  nd::Tensor block_backward(Block& b, const BlockCache& cache, const nd::Tensor& grad_out);
  nd::Tensor embed(std::span<const TokenId> ids) const;
  nd::Tensor head_logits(const nd::Tensor& normed) const;
  void check_ids(std::span<const TokenId> ids) const;

  ModelConfig config_;
  nd::Tensor embed_;       // [V x H]
  std::vector<Block> blocks_;
  nd::Tensor final_norm_;  // [H]
  nd::Tensor head_;        // [V x H]
  nd::Tensor head_t_;      // [H x V]
};

// Mean causal next-token cross-entropy of ids under the model.
double sequence_cross_entropy(const Model& model, std::span<const TokenId> ids);

}  // namespace lorascore::glm
