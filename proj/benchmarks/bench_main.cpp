// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "lorascore/eval.hpp"
#include "lorascore/finetune.hpp"
#include "lorascore/model.hpp"
#include "lorascore/nf4.hpp"
#include "lorascore/ops.hpp"
#include "lorascore/opt8.hpp"
#include "lorascore/scoring.hpp"

namespace nd = lorascore::nd;
namespace quant = lorascore::quant;
namespace glm = lorascore::glm;
namespace ft = lorascore::finetune;
using lorascore::Rng;

namespace {

nd::Tensor normal(Rng& rng, std::size_t r, std::size_t c) {
  nd::Tensor t({r, c});
  for (auto& v : t.data()) v = static_cast<float>(rng.normal());
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const auto a = normal(rng, n, n), b = normal(rng, n, n);
  for (auto _ : state) benchmark::DoNotOptimize(nd::matmul(a, b));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_Nf4Quantize(benchmark::State& state) {
  Rng rng(2);
  const auto m = normal(rng, 512, 512);
  for (auto _ : state) benchmark::DoNotOptimize(quant::quantize_nf4(m));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) * static_cast<std::int64_t>(m.size() * 4));
}
BENCHMARK(BM_Nf4Quantize);

void BM_Nf4Dequantize(benchmark::State& state) {
  Rng rng(3);
  const auto q = quant::quantize_nf4(normal(rng, 512, 512));
  for (auto _ : state) benchmark::DoNotOptimize(quant::dequantize(q));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations()) * static_cast<std::int64_t>(q.size() * 4));
}
BENCHMARK(BM_Nf4Dequantize);

void BM_Opt8Step(benchmark::State& state) {
  Rng rng(4);
  nd::Parameter p(normal(rng, 256, 256), true);
  for (auto& g : p.grad.data()) g = static_cast<float>(rng.normal());
  auto s = quant::Opt8State::create(p.value.shape(), quant::MomentStorage::kBlockwise8);
  const quant::AdamWConfig cfg;
  for (auto _ : state) quant::opt8_step(p, s, cfg);
}
BENCHMARK(BM_Opt8Step);

void BM_Qwk(benchmark::State& state) {
  Rng rng(5);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<int> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = static_cast<int>(rng.below(13));
    b[i] = static_cast<int>(rng.below(13));
  }
  for (auto _ : state) benchmark::DoNotOptimize(lorascore::eval::qwk(a, b, 0, 12));
}
BENCHMARK(BM_Qwk)->Arg(100)->Arg(10000);

struct ToyModel {
  lorascore::data::ItemSpec item = ft::keyword_item();
  std::vector<lorascore::data::ScoredResponse> responses = ft::keyword_responses(20, 6);
  glm::Tokenizer tok = glm::Tokenizer::build(ft::tokenizer_corpus(item, responses), 2048);
  glm::Model model = make();

  glm::Model make() const {
    glm::ModelConfig c;
    c.vocab_size = tok.size();
    auto m = glm::Model::random(c, 1);
    m.quantize_base();
    Rng rng(7);
    m.attach_adapters(32, 32, rng);
    return m;
  }
};

void BM_PredictScore(benchmark::State& state) {
  const ToyModel t;
  for (auto _ : state) {
    benchmark::DoNotOptimize(lorascore::scoring::predict_score(t.model, t.tok, t.item, t.responses[0].text));
  }
}
BENCHMARK(BM_PredictScore)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  ToyModel t;
  ft::AdapterOptimizer opt(t.model, quant::MomentStorage::kBlockwise8);
  const auto ex = ft::build_example(t.responses[0], t.item, t.tok, 2048);
  for (auto _ : state) benchmark::DoNotOptimize(opt.step(t.model, ex, 2e-4));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
