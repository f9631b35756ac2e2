// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#include "lorascore/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "lorascore/error.hpp"
#include "lorascore/rng.hpp"
#include "lorascore/serialize.hpp"

namespace lorascore::glm {
namespace {

constexpr char kMagic[] = "LSMODEL";
constexpr std::uint32_t kVersion = 1;

nd::Tensor random_matrix(std::size_t rows, std::size_t cols, double std, Rng& rng) {
  nd::Tensor t({rows, cols});
  for (auto& v : t.data()) v = static_cast<float>(rng.normal() * std);
  return t;
}

nd::Tensor ones(std::size_t n) { return nd::Tensor::filled({n}, 1.0F); }

template <typename F>
void for_each_linear(Block& b, F&& f) {
  f("q", b.q);
  f("k", b.k);
  f("v", b.v);
  f("o", b.o);
  f("gate", b.gate);
  f("up", b.up);
  f("down", b.down);
}

template <typename F>
void for_each_linear(const Block& b, F&& f) {
  f("q", b.q);
  f("k", b.k);
  f("v", b.v);
  f("o", b.o);
  f("gate", b.gate);
  f("up", b.up);
  f("down", b.down);
}

nd::Tensor tensor_from_rows(const std::vector<float>& data, std::size_t width) {
  return nd::Tensor({data.size() / width, width}, data);
}

void write_linear(io::ByteWriter& w, const lora::AdaptedLinear& l) {
  if (const auto* q = l.base_quantized()) {
    w.u8(1);
    w.u64(q->options().block_size);
    w.u8(q->options().double_quant ? 1 : 0);
    w.u64(q->options().constant_group);
    const auto codes = q->packed_codes();
    w.u64(codes.size());
    w.bytes(codes);
    w.f32_array(q->absmax());
    w.u64(q->absmax_codes().size());
    w.bytes(q->absmax_codes());
    w.f32_array(q->group_min());
    w.f32_array(q->group_max());
  } else {
    w.u8(0);
    w.f32_array(l.base_parameter()->value.data());
  }
}

lora::AdaptedLinear read_linear(io::ByteReader& r, std::size_t d, std::size_t k) {
  const std::uint8_t tag = r.u8();
  if (tag == 0) {
    auto values = r.f32_array();
    if (values.size() != d * k) throw DecodeError("linear weight has the wrong element count");
    return lora::AdaptedLinear(nd::Tensor({d, k}, std::move(values)));
  }
  if (tag != 1) throw DecodeError("unknown linear storage tag " + std::to_string(tag));
  quant::QuantOptions opts;
  opts.block_size = r.u64();
  opts.double_quant = r.u8() != 0;
  opts.constant_group = r.u64();
  const auto packed = r.bytes(r.u64());
  std::vector<std::uint8_t> codes;
  codes.reserve(packed.size() * 2);
  for (const auto byte : packed) {
    codes.push_back(byte & 0x0F);
    codes.push_back(byte >> 4);
  }
  if (codes.size() < d * k) throw DecodeError("quantized codes are truncated");
  codes.resize(d * k);
  auto absmax = r.f32_array();
  auto absmax_q = r.bytes(r.u64());
  auto gmin = r.f32_array();
  auto gmax = r.f32_array();
  return lora::AdaptedLinear(quant::QuantizedMatrix::from_parts(
      {d, k}, opts, codes, std::move(absmax), std::move(absmax_q), std::move(gmin), std::move(gmax)));
}

}  // namespace

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ValidationError(std::string(name) + " must be positive");
  };
  positive(n_layers, "n_layers");
  positive(hidden_size, "hidden_size");
  positive(intermediate_size, "intermediate_size");
  positive(n_heads, "n_heads");
  positive(vocab_size, "vocab_size");
  positive(max_context, "max_context");
  if (hidden_size % n_heads != 0) {
    throw ValidationError("hidden_size " + std::to_string(hidden_size) +
                          " is not divisible by n_heads " + std::to_string(n_heads));
  }
  if ((hidden_size / n_heads) % 2 != 0) throw ValidationError("head width must be even for rotary encoding");
  if (!(rope_base > 1.0) || !(norm_eps > 0.0) || !(init_std > 0.0)) {
    throw ValidationError("rope_base, norm_eps and init_std must be positive");
  }
}

Model Model::random(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  Model m;
  m.config_ = config;
  const std::size_t h = config.hidden_size;
  const std::size_t f = config.intermediate_size;
  const double s = config.init_std;
  m.embed_ = random_matrix(config.vocab_size, h, s, rng);
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    Block b;
    b.attn_norm = ones(h);
    b.ffn_norm = ones(h);
    b.q = lora::AdaptedLinear(random_matrix(h, h, s, rng));
    b.k = lora::AdaptedLinear(random_matrix(h, h, s, rng));
    b.v = lora::AdaptedLinear(random_matrix(h, h, s, rng));
    b.o = lora::AdaptedLinear(random_matrix(h, h, s, rng));
    b.gate = lora::AdaptedLinear(random_matrix(f, h, s, rng));
    b.up = lora::AdaptedLinear(random_matrix(f, h, s, rng));
    b.down = lora::AdaptedLinear(random_matrix(h, f, s, rng));
    m.blocks_.push_back(std::move(b));
  }
  m.final_norm_ = ones(h);
  m.head_ = random_matrix(config.vocab_size, h, s, rng);
  m.head_t_ = nd::transpose(m.head_);
  return m;
}

void Model::quantize_base(const quant::QuantOptions& options) {
  for (auto& b : blocks_) {
    for_each_linear(b, [&](const char*, lora::AdaptedLinear& l) {
      if (l.quantized()) return;
      if (l.merged()) throw StateError("cannot quantize a merged layer");
      lora::AdaptedLinear next(quant::quantize_nf4(l.base_weight(), options));
      if (const auto* a = l.adapter()) next.attach(*a);
      l = std::move(next);
    });
  }
}

bool Model::base_quantized() const {
  return !blocks_.empty() && blocks_.front().q.quantized();
}

void Model::check_ids(std::span<const TokenId> ids) const {
  for (const TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      throw IndexError("token id " + std::to_string(id) + " outside vocabulary of " +
                       std::to_string(config_.vocab_size));
    }
  }
}

nd::Tensor Model::embed(std::span<const TokenId> ids) const { return nd::embedding(embed_, ids); }

nd::Tensor Model::head_logits(const nd::Tensor& normed) const { return nd::matmul(normed, head_t_); }

nd::Tensor Model::block_forward(const Block& b, const nd::Tensor& x, std::size_t first_position,
                                std::vector<float>* keys, std::vector<float>* values,
                                BlockCache* c) const {
  const double eps = config_.norm_eps;
  const std::size_t heads = config_.n_heads;
  const nd::Tensor a = nd::rmsnorm(x, b.attn_norm.data(), eps, c ? &c->norm1 : nullptr);
  nd::Tensor q = b.q.forward(a, c ? &c->lq : nullptr);
  nd::Tensor k = b.k.forward(a, c ? &c->lk : nullptr);
  nd::Tensor v = b.v.forward(a, c ? &c->lv : nullptr);
  nd::rope_inplace(q, heads, first_position, config_.rope_base, false);
  nd::rope_inplace(k, heads, first_position, config_.rope_base, false);
  nd::Tensor attn;
  if (keys) {
    keys->insert(keys->end(), k.data().begin(), k.data().end());
    values->insert(values->end(), v.data().begin(), v.data().end());
    attn = nd::causal_attention(q, tensor_from_rows(*keys, k.cols()),
                                tensor_from_rows(*values, v.cols()), heads,
                                static_cast<nd::AttentionCache<float>*>(nullptr));
  } else {
    attn = nd::causal_attention(q, k, v, heads, c ? &c->attn : nullptr);
  }
  if (c) {
    c->q = std::move(q);
    c->k = std::move(k);
    c->v = std::move(v);
  }
  nd::Tensor x2 = x;
  nd::add_inplace(x2, b.o.forward(attn, c ? &c->lo : nullptr));
  const nd::Tensor n2 = nd::rmsnorm(x2, b.ffn_norm.data(), eps, c ? &c->norm2 : nullptr);
  nd::Tensor g = b.gate.forward(n2, c ? &c->lgate : nullptr);
  nd::Tensor u = b.up.forward(n2, c ? &c->lup : nullptr);
  const nd::Tensor hidden = nd::swiglu(g, u);
  if (c) {
    c->gate = std::move(g);
    c->up = std::move(u);
  }
  nd::add_inplace(x2, b.down.forward(hidden, c ? &c->ldown : nullptr));
  return x2;
}

nd::Tensor Model::block_backward(Block& b, const BlockCache& c, const nd::Tensor& grad_out) {
  const std::size_t heads = config_.n_heads;
  const nd::Tensor dh = b.down.backward(c.ldown, grad_out);
  nd::Tensor dg(c.gate.shape());
  nd::Tensor du(c.up.shape());
  nd::swiglu_backward(c.gate, c.up, dh, dg, du);
  nd::Tensor dn2 = b.gate.backward(c.lgate, dg);
  nd::add_inplace(dn2, b.up.backward(c.lup, du));
  nd::Tensor dx2 = grad_out;
  nd::add_inplace(dx2, nd::rmsnorm_backward(c.norm2, std::span<const float>(b.ffn_norm.data()), dn2,
                                            std::span<float>()));

  const nd::Tensor dattn = b.o.backward(c.lo, dx2);
  auto g = nd::causal_attention_backward(c.q, c.k, c.v, heads, c.attn, dattn);
  nd::rope_inplace(g.grad_q, heads, 0, config_.rope_base, true);
  nd::rope_inplace(g.grad_k, heads, 0, config_.rope_base, true);
  nd::Tensor da = b.q.backward(c.lq, g.grad_q);
  nd::add_inplace(da, b.k.backward(c.lk, g.grad_k));
  nd::add_inplace(da, b.v.backward(c.lv, g.grad_v));
  nd::add_inplace(dx2, nd::rmsnorm_backward(c.norm1, std::span<const float>(b.attn_norm.data()), da,
                                            std::span<float>()));
  return dx2;
}

nd::Tensor Model::forward(std::span<const TokenId> ids) const {
  if (ids.empty()) throw ValidationError("forward needs at least one token");
  if (ids.size() > config_.max_context) {
    throw ContextOverflowError("sequence of " + std::to_string(ids.size()) +
                               " tokens exceeds the context of " + std::to_string(config_.max_context));
  }
  check_ids(ids);
  nd::Tensor x = embed(ids);
  for (const auto& b : blocks_) x = block_forward(b, x, 0, nullptr, nullptr, nullptr);
  return head_logits(nd::rmsnorm(x, final_norm_.data(), config_.norm_eps,
                                 static_cast<nd::RmsNormCache<float>*>(nullptr)));
}

nd::Tensor Model::forward_train(std::span<const TokenId> ids, std::span<const std::size_t> rows,
                                ForwardCache& cache) const {
  if (ids.empty()) throw ValidationError("forward needs at least one token");
  if (ids.size() > config_.max_context) {
    throw ContextOverflowError("sequence of " + std::to_string(ids.size()) +
                               " tokens exceeds the context of " + std::to_string(config_.max_context));
  }
  if (rows.empty()) throw ValidationError("forward_train needs at least one output row");
  check_ids(ids);
  for (const auto r : rows) {
    if (r >= ids.size()) throw IndexError("output row " + std::to_string(r) + " past sequence end");
  }
  cache.blocks.assign(blocks_.size(), BlockCache{});
  cache.rows.assign(rows.begin(), rows.end());
  cache.length = ids.size();
  nd::Tensor x = embed(ids);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    x = block_forward(blocks_[i], x, 0, nullptr, nullptr, &cache.blocks[i]);
  }
  const std::size_t h = config_.hidden_size;
  nd::Tensor picked({rows.size(), h});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(x.row(rows[i]).data(), h, picked.row(i).data());
  }
  return head_logits(nd::rmsnorm(picked, final_norm_.data(), config_.norm_eps, &cache.final_norm));
}

void Model::backward(const ForwardCache& cache, const nd::Tensor& grad_logits) {
  if (cache.blocks.size() != blocks_.size()) throw StateError("forward cache does not match model");
  if (grad_logits.rows() != cache.rows.size() || grad_logits.cols() != config_.vocab_size) {
    throw DimensionError("logit gradient " + nd::shape_string(grad_logits.shape()) +
                         " does not match cached rows");
  }
  const std::size_t h = config_.hidden_size;
  const nd::Tensor dnormed = nd::matmul(grad_logits, head_);
  const nd::Tensor dpicked = nd::rmsnorm_backward(
      cache.final_norm, std::span<const float>(final_norm_.data()), dnormed, std::span<float>());
  nd::Tensor dx({cache.length, h});
  for (std::size_t i = 0; i < cache.rows.size(); ++i) {
    float* dst = dx.row(cache.rows[i]).data();
    const float* src = dpicked.row(i).data();
    for (std::size_t j = 0; j < h; ++j) dst[j] += src[j];
  }
  for (std::size_t i = blocks_.size(); i-- > 0;) dx = block_backward(blocks_[i], cache.blocks[i], dx);
}

nd::Tensor Model::extend(std::span<const TokenId> ids, KvCache& kv) const {
  if (ids.empty()) throw ValidationError("extend needs at least one token");
  if (kv.length + ids.size() > config_.max_context) {
    throw ContextOverflowError("sequence of " + std::to_string(kv.length + ids.size()) +
                               " tokens exceeds the context of " + std::to_string(config_.max_context));
  }
  check_ids(ids);
  if (kv.keys.size() != blocks_.size()) {
    if (kv.length != 0) throw StateError("KV cache does not match model");
    kv.keys.assign(blocks_.size(), {});
    kv.values.assign(blocks_.size(), {});
  }
  nd::Tensor x = embed(ids);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    x = block_forward(blocks_[i], x, kv.length, &kv.keys[i], &kv.values[i], nullptr);
  }
  kv.length += ids.size();
  const std::size_t h = config_.hidden_size;
  nd::Tensor last({1, h});
  std::copy_n(x.row(x.rows() - 1).data(), h, last.row(0).data());
  return head_logits(nd::rmsnorm(last, final_norm_.data(), config_.norm_eps,
                                 static_cast<nd::RmsNormCache<float>*>(nullptr)));
}

namespace {

TokenId argmax(std::span<const float> logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;  // strict: lowest id wins ties
  }
  return static_cast<TokenId>(best);
}

TokenId sample(std::span<const float> logits, double temperature, Rng& rng) {
  if (!(temperature > 0.0)) return argmax(logits);
  double mx = -std::numeric_limits<double>::infinity();
  for (const float l : logits) mx = std::max(mx, static_cast<double>(l));
  std::vector<double> w(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    w[i] = std::exp((logits[i] - mx) / temperature);
    sum += w[i];
  }
  double u = rng.uniform() * sum;
  for (std::size_t i = 0; i < w.size(); ++i) {
    u -= w[i];
    if (u < 0.0) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(w.size() - 1);
}

}  // namespace

Generation Model::generate(std::span<const TokenId> prompt, const GenerateOptions& options) const {
  if (options.max_new_tokens == 0) throw ValidationError("max_new_tokens must be >= 1");
  if (prompt.empty()) throw ValidationError("generation needs a nonempty prompt");
  if (prompt.size() > config_.max_context) {
    throw ContextOverflowError("prompt of " + std::to_string(prompt.size()) +
                               " tokens exceeds the context of " + std::to_string(config_.max_context));
  }
  Rng rng(options.seed);
  KvCache kv;
  Generation out;
  nd::Tensor logits = extend(prompt, kv);
  while (true) {
    const TokenId next = options.mode == DecodeMode::kGreedy
                             ? argmax(logits.data())
                             : sample(logits.data(), options.temperature, rng);
    out.tokens.push_back(next);
    if (std::find(options.stop_tokens.begin(), options.stop_tokens.end(), next) !=
        options.stop_tokens.end()) {
      out.stop = StopReason::kStopToken;
      break;
    }
    if (out.tokens.size() >= options.max_new_tokens) {
      out.stop = StopReason::kMaxTokens;
      break;
    }
    if (kv.length >= config_.max_context) {
      out.stop = StopReason::kContextFull;
      break;
    }
    const TokenId feed[1] = {next};
    logits = extend(feed, kv);
  }
  return out;
}

void Model::attach_adapters(std::size_t rank, double alpha, Rng& rng, double init_std) {
  for (auto& b : blocks_) {
    for_each_linear(b, [&](const char*, lora::AdaptedLinear& l) {
      l.attach(lora::LoraAdapter::create(l.out_features(), l.in_features(), rank, alpha, rng, init_std));
    });
  }
}

bool Model::has_adapters() const { return !blocks_.empty() && blocks_.front().q.has_adapter(); }

std::vector<NamedLayer> Model::adapted_layers() {
  std::vector<NamedLayer> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    for_each_linear(blocks_[i], [&](const char* name, lora::AdaptedLinear& l) {
      out.push_back({"layers." + std::to_string(i) + "." + name, &l});
    });
  }
  return out;
}

std::vector<std::pair<std::string, const lora::AdaptedLinear*>> Model::adapted_layers() const {
  std::vector<std::pair<std::string, const lora::AdaptedLinear*>> out;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    for_each_linear(blocks_[i], [&](const char* name, const lora::AdaptedLinear& l) {
      out.emplace_back("layers." + std::to_string(i) + "." + name, &l);
    });
  }
  return out;
}

void Model::zero_adapter_grads() {
  for (auto& [name, layer] : adapted_layers()) {
    if (auto* a = layer->adapter()) a->zero_grad();
  }
}

std::uint64_t Model::adapter_parameter_count() const {
  std::uint64_t n = 0;
  for (const auto& [name, layer] : adapted_layers()) {
    if (const auto* a = layer->adapter()) n += a->trainable_count();
  }
  return n;
}

std::uint64_t Model::base_parameter_count() const {
  std::uint64_t n = embed_.size() + final_norm_.size() + head_.size();
  for (const auto& b : blocks_) {
    n += b.attn_norm.size() + b.ffn_norm.size();
    for_each_linear(b, [&](const char*, const lora::AdaptedLinear& l) {
      n += static_cast<std::uint64_t>(l.out_features()) * l.in_features();
    });
  }
  return n;
}

std::string Model::serialize_base() const {
  io::ByteWriter w;
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(kMagic), sizeof(kMagic) - 1));
  w.u32(kVersion);
  for (const std::size_t v : {config_.n_layers, config_.hidden_size, config_.intermediate_size,
                              config_.n_heads, config_.vocab_size, config_.max_context}) {
    w.u64(v);
  }
  w.f64(config_.rope_base);
  w.f64(config_.norm_eps);
  w.f64(config_.init_std);
  w.f32_array(embed_.data());
  for (const auto& b : blocks_) {
    w.f32_array(b.attn_norm.data());
    w.f32_array(b.ffn_norm.data());
    for_each_linear(b, [&](const char*, const lora::AdaptedLinear& l) {
      if (l.merged()) throw StateError("cannot serialize a merged base");
      write_linear(w, l);
    });
  }
  w.f32_array(final_norm_.data());
  w.f32_array(head_.data());
  return w.buffer();
}

Model Model::deserialize_base(std::string_view bytes) {
  io::ByteReader r(bytes);
  const auto magic = r.bytes(sizeof(kMagic) - 1);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) throw DecodeError("not a model file");
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw DecodeError("unsupported model version " + std::to_string(version));
  ModelConfig c;
  c.n_layers = r.u64();
  c.hidden_size = r.u64();
  c.intermediate_size = r.u64();
  c.n_heads = r.u64();
  c.vocab_size = r.u64();
  c.max_context = r.u64();
  c.rope_base = r.f64();
  c.norm_eps = r.f64();
  c.init_std = r.f64();
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw DecodeError(std::string("model header is invalid: ") + e.what());
  }
  const std::size_t h = c.hidden_size;
  const std::size_t f = c.intermediate_size;
  auto vec = [&](std::size_t n, const char* what) {
    auto v = r.f32_array();
    if (v.size() != n) throw DecodeError(std::string(what) + " has the wrong element count");
    return v;
  };
  Model m;
  m.config_ = c;
  m.embed_ = nd::Tensor({c.vocab_size, h}, vec(c.vocab_size * h, "embedding"));
  for (std::size_t i = 0; i < c.n_layers; ++i) {
    Block b;
    b.attn_norm = nd::Tensor({h}, vec(h, "attention norm"));
    b.ffn_norm = nd::Tensor({h}, vec(h, "ffn norm"));
    b.q = read_linear(r, h, h);
    b.k = read_linear(r, h, h);
    b.v = read_linear(r, h, h);
    b.o = read_linear(r, h, h);
    b.gate = read_linear(r, f, h);
    b.up = read_linear(r, f, h);
    b.down = read_linear(r, h, f);
    m.blocks_.push_back(std::move(b));
  }
  m.final_norm_ = nd::Tensor({h}, vec(h, "final norm"));
  m.head_ = nd::Tensor({c.vocab_size, h}, vec(c.vocab_size * h, "head"));
  m.head_t_ = nd::transpose(m.head_);
  r.expect_end();
  return m;
}

std::uint64_t Model::base_fingerprint() const { return io::fnv1a(serialize_base()); }

void Model::save(const std::string& path) const { io::write_file(path, serialize_base()); }

Model Model::load(const std::string& path) { return deserialize_base(io::read_file(path)); }

double sequence_cross_entropy(const Model& model, std::span<const TokenId> ids) {
  if (ids.size() < 2) throw ValidationError("cross-entropy needs at least two tokens");
  const nd::Tensor logits = model.forward(ids.first(ids.size() - 1));
  std::vector<std::int32_t> targets(ids.begin() + 1, ids.end());
  // std::vector<bool> has no contiguous storage to view as a span.
  std::unique_ptr<bool[]> mask(new bool[targets.size()]);
  std::fill_n(mask.get(), targets.size(), true);
  return nd::cross_entropy_masked(logits, targets, std::span<const bool>(mask.get(), targets.size())).loss;
}

}  // namespace lorascore::glm
