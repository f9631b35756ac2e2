// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "gradcheck.hpp"
#include "lorascore/data.hpp"
#include "lorascore/eval.hpp"
#include "lorascore/finetune.hpp"
#include "lorascore/log.hpp"
#include "lorascore/lora.hpp"
#include "lorascore/memory.hpp"
#include "lorascore/model.hpp"
#include "lorascore/nf4.hpp"
#include "lorascore/scoring.hpp"
#include "lorascore/serialize.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
namespace nd = lorascore::nd;
namespace quant = lorascore::quant;
namespace lora = lorascore::lora;
namespace glm = lorascore::glm;
namespace data = lorascore::data;
namespace ft = lorascore::finetune;
namespace sc = lorascore::scoring;
namespace eval = lorascore::eval;
using lorascore::Rng;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

// ---------------------------------------------------------------- 1
Outcome qwk_exhaustive() {
  lorascore::log::WarningCapture quiet;
  double worst = 0.0;
  std::uint64_t pairs = 0;
  for (std::size_t n = 1; n <= 6; ++n) {
    std::vector<int> a(n), b(n);
    const std::uint64_t total = 1ULL << (4 * n);
    for (std::uint64_t code = 0; code < total; ++code) {
      std::uint64_t c = code;
      for (std::size_t i = 0; i < n; ++i, c >>= 4) {
        a[i] = static_cast<int>(c & 3);
        b[i] = static_cast<int>((c >> 2) & 3);
      }
      const double got = eval::qwk(a, b, 0, 3);
      const double want = static_cast<double>(oracle::brute_qwk(a, b, 0, 3));
      worst = std::max(worst, std::fabs(got - want));
      ++pairs;
    }
  }
  return {worst < 1e-12, std::to_string(pairs) + " pairs, max error " + fmt("%.3g", worst)};
}

// ---------------------------------------------------------------- 2
struct TableRow {
  const char* item;
  double qwk;
};

// Rater-vs-rater QWK on the test splits of the public benchmark.
constexpr TableRow kRaterQwk[] = {
    {"aes1", 0.721}, {"aes2", 0.814}, {"aes3", 0.769}, {"aes4", 0.851}, {"aes5", 0.753},
    {"aes6", 0.776}, {"aes7", 0.721}, {"aes8", 0.624}, {"sas1", 0.938}, {"sas2", 0.911},
    {"sas3", 0.762}, {"sas4", 0.686}, {"sas5", 0.935}, {"sas6", 0.973}, {"sas7", 0.968},
    {"sas8", 0.837}, {"sas9", 0.831}, {"sas10", 0.904},
};

double rater_qwk(const data::ItemSpec& item, std::span<const data::ScoredResponse> rs) {
  std::vector<int> a, b;
  for (const auto& r : rs) {
    a.push_back(r.rater1);
    b.push_back(r.rater2);
  }
  return eval::qwk(a, b, item.rater_min, item.rater_max);
}

Outcome rater_reproduction_with_data(const fs::path& dir) {
  const auto registry = data::Registry::builtin();
  std::vector<data::ScoredResponse> all;
  for (const char* name : {"aes.tsv", "sas.tsv"}) {
    if (fs::exists(dir / name)) {
      auto part = data::ingest((dir / name).string(), registry).responses;
      all.insert(all.end(), part.begin(), part.end());
    }
  }
  if (all.empty()) return {false, "no aes.tsv or sas.tsv in " + dir.string()};
  if (!fs::exists(dir / "splits.tsv")) return {false, "missing split manifest " + (dir / "splits.tsv").string()};
  const auto splits = data::load_split_manifest((dir / "splits.tsv").string(), all);

  bool ok = true;
  std::size_t checked = 0;
  std::ostringstream detail;
  for (const auto& row : kRaterQwk) {
    const auto it = splits.find(row.item);
    const auto responses = data::select_item(all, row.item);
    if (it == splits.end() || responses.empty()) continue;
    // Cross-validated items pool their test folds.
    std::vector<std::string> ids;
    std::set<std::string> seen;
    for (const auto& fold : it->second.folds) {
      for (const auto& id : fold.test) {
        if (seen.insert(id).second) ids.push_back(id);
      }
    }
    const auto test = data::pick(responses, ids);
    const double q = rater_qwk(registry.at(row.item), test);
    const bool good = std::fabs(q - row.qwk) <= 0.001 + 1e-9;
    ok = ok && good;
    ++checked;
    if (!good) detail << row.item << " " << fmt("%.4f", q) << " vs " << fmt("%.3f", row.qwk) << "; ";
  }
  detail << checked << " items checked";
  return {ok && checked > 0, detail.str()};
}

// Without operator data the criterion is conditional; the same pipeline
// (raw layout ingest, split manifest, rater QWK) runs on a synthetic file
// and is checked against the brute-force oracle.
Outcome rater_reproduction_fixture() {
  Rng rng(2);
  std::ostringstream raw;
  raw << "Id\tEssaySet\tScore1\tScore2\tEssayText\n";
  std::vector<std::pair<int, int>> scores;
  for (int i = 0; i < 400; ++i) {
    const int s1 = static_cast<int>(rng.below(4));
    const int s2 = rng.below(4) == 0 ? static_cast<int>(rng.below(4)) : s1;
    scores.emplace_back(s1, s2);
    raw << (1000 + i) << "\t6\t" << s1 << '\t' << s2 << "\tresponse number " << i << '\n';
  }
  const auto registry = data::Registry::builtin();
  const auto responses = data::ingest_text(raw.str(), registry).responses;
  const auto spec = data::five_fold(responses);
  const auto manifest = data::format_split_manifest({spec});
  const auto parsed = data::parse_split_manifest(manifest, responses).at("sas6");
  const auto test = data::pick(responses, parsed.folds[0].test);
  const double got = rater_qwk(registry.at("sas6"), test);

  std::vector<int> a, b;
  for (const auto& r : test) {
    const int i = std::stoi(r.id) - 1000;
    a.push_back(scores[static_cast<std::size_t>(i)].first);
    b.push_back(scores[static_cast<std::size_t>(i)].second);
  }
  const double want = static_cast<double>(oracle::brute_qwk(a, b, 0, 3));
  return {std::fabs(got - want) < 1e-12 && test.size() == 80,
          "conditional: LORASCORE_ASAP_DIR not set; synthetic sas6 fixture, test n " + std::to_string(test.size()) +
              ", qwk " + fmt("%.4f", got) + " matches oracle"};
}

Outcome rater_reproduction() {
  if (const char* dir = std::getenv("LORASCORE_ASAP_DIR"); dir && *dir) return rater_reproduction_with_data(dir);
  return rater_reproduction_fixture();
}

// ---------------------------------------------------------------- 3
Outcome gradient_checks() {
  const auto results = gradcheck::check_all_primitives(2024, 10);
  bool ok = !results.empty();
  double worst = 0.0;
  std::string failing;
  for (const auto& r : results) {
    worst = std::max(worst, r.worst);
    if (!(r.worst < gradcheck::kMaxRelError) || r.shapes != 10) {
      ok = false;
      failing += " " + r.name;
    }
  }
  return {ok, std::to_string(results.size()) + " primitives x 10 shapes, worst relative error " +
                  fmt("%.3g", worst) + (failing.empty() ? "" : ", failing:" + failing)};
}

// ---------------------------------------------------------------- 4
nd::Tensor normal_tensor(Rng& rng, nd::Shape shape, double scale = 1.0) {
  nd::Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(rng.normal() * scale);
  return t;
}

float max_abs_diff(const nd::Tensor& a, const nd::Tensor& b) {
  float m = 0.0F;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

Outcome lora_invariants() {
  lorascore::log::WarningCapture quiet;  // some random shapes have a high rank
  Rng rng(404);
  bool noop = true, counts = true;
  float worst_merge = 0.0F, worst_restore = 0.0F;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> dims;
  std::uint64_t expected_total = 0;
  const std::size_t rank = 4;
  for (int layer = 0; layer < 20; ++layer) {
    const std::size_t d = 4 + rng.below(60), k = 4 + rng.below(60);
    const nd::Tensor w = normal_tensor(rng, {d, k});
    const nd::Tensor x = normal_tensor(rng, {3 + rng.below(5), k});
    lora::AdaptedLinear plain(w);
    lora::AdaptedLinear adapted(w);
    adapted.attach(lora::LoraAdapter::create(d, k, rank, 8.0, rng));
    const auto y0 = plain.forward(x), y1 = adapted.forward(x);
    noop = noop && std::equal(y0.data().begin(), y0.data().end(), y1.data().begin());

    for (auto& v : adapted.adapter()->B.value.data()) v = static_cast<float>(rng.normal() * 0.1);
    const auto before = adapted.forward(x);
    adapted.merge();
    worst_merge = std::max(worst_merge, max_abs_diff(before, adapted.forward(x)));
    adapted.unmerge();
    worst_restore = std::max(worst_restore, max_abs_diff(adapted.base_weight(), w));

    counts = counts && adapted.adapter()->trainable_count() == rank * (k + d);
    dims.emplace_back(d, k);
    expected_total += rank * (k + d);
  }
  counts = counts && lora::count_trainable(dims, rank) == expected_total;
  return {noop && counts && worst_merge < 1e-5F && worst_restore < 1e-5F,
          std::string("20 layers, init no-op ") + (noop ? "bitwise" : "BROKEN") + ", merge " +
              fmt("%.3g", worst_merge) + ", unmerge " + fmt("%.3g", worst_restore) + ", r(k+d) " +
              (counts ? "exact" : "WRONG")};
}

// ---------------------------------------------------------------- 5
Outcome quantization() {
  Rng rng(5);
  std::size_t idempotent = 0, exact = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const nd::Tensor m = normal_tensor(rng, {1 + rng.below(24), 1 + rng.below(48)}, 0.01 + rng.uniform());
    const auto q = quant::quantize_nf4(m);
    if (quant::quantize_nf4(quant::dequantize(q)).unpacked_codes() == q.unpacked_codes()) ++idempotent;

    // Zeros and each block's +-absmax element come back exactly.
    nd::Tensor z = m;
    for (std::size_t i = 0; i < z.size(); i += 3) z[i] = 0.0F;
    const auto qz = quant::quantize_nf4(z, {.block_size = 64, .double_quant = false});
    const auto dz = quant::dequantize(qz);
    bool ok = true;
    for (std::size_t b = 0; b * 64 < z.size(); ++b) {
      const std::size_t end = std::min(z.size(), (b + 1) * 64);
      std::size_t arg = b * 64;
      for (std::size_t i = b * 64; i < end; ++i) {
        if (z[i] == 0.0F) ok = ok && dz[i] == 0.0F;
        if (std::fabs(z[i]) > std::fabs(z[arg])) arg = i;
      }
      ok = ok && dz[arg] == z[arg];
    }
    if (ok) ++exact;
  }

  std::size_t wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng r(seed);
    const nd::Tensor m = normal_tensor(r, {128, 128});
    const auto d = quant::dequantize(quant::quantize_nf4(m));
    const auto u = oracle::uniform_int4_roundtrip(m.data(), 64);
    double e_nf4 = 0.0, e_int4 = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      e_nf4 += (static_cast<double>(m[i]) - d[i]) * (static_cast<double>(m[i]) - d[i]);
      e_int4 += (static_cast<double>(m[i]) - u[i]) * (static_cast<double>(m[i]) - u[i]);
    }
    if (e_nf4 < e_int4) ++wins;
  }
  return {idempotent == 100 && exact == 100 && wins == 10,
          "idempotent " + std::to_string(idempotent) + "/100, exact zero/scale " + std::to_string(exact) +
              "/100, nf4 beats int4 " + std::to_string(wins) + "/10 seeds"};
}

// ---------------------------------------------------------------- 6
Outcome memory_accounting() {
  const std::uint64_t n = 7'000'000'000ULL;
  quant::MemoryMode fp32;
  const auto a = quant::memory_report(n, fp32);
  quant::MemoryMode nf4;
  nf4.weights = quant::WeightMode::kNf4;
  const auto b = quant::memory_report(n, nf4);
  const bool ok = a.weights == 28'000'000'000ULL && b.weights == 3'500'000'000ULL &&
                  b.quant_constants == n / 64 && n % 64 == 0;
  return {ok, "fp32 weights " + std::to_string(a.weights) + " B; nf4 weights " + std::to_string(b.weights) +
                  " B + constants " + std::to_string(b.quant_constants) + " B"};
}

// ---------------------------------------------------------------- 7
Outcome synthetic_finetune() {
  const auto item = ft::keyword_item();
  const auto train = ft::keyword_responses(150, data::kDefaultSplitSeed, {}, "train");
  const auto dev = ft::keyword_responses(60, data::kDefaultSplitSeed + 1, {}, "dev");

  // The task must be learnable: the keyword counter scores the dev set perfectly.
  std::vector<int> gold, oracle_pred;
  for (const auto& r : dev) {
    gold.push_back(r.resolved);
    oracle_pred.push_back(ft::keyword_oracle(r.text));
  }
  const double oracle_qwk = eval::qwk(gold, oracle_pred, item.min_score, item.max_score);
  if (oracle_qwk != 1.0) return {false, "keyword oracle qwk " + fmt("%.3f", oracle_qwk)};

  auto all = train;
  all.insert(all.end(), dev.begin(), dev.end());
  const auto tok = glm::Tokenizer::build(ft::tokenizer_corpus(item, all), 2048);
  glm::ModelConfig mc;  // 4 layers, hidden 128
  mc.vocab_size = tok.size();
  auto model = glm::Model::random(mc, 1);
  model.quantize_base();

  ft::TrainConfig tc;  // lr 2e-4, 10 epochs, batch 1, r = alpha = 32, 8-bit moments
  const auto res = ft::train_item(model, tok, item, train, dev, tc);

  std::vector<double> history;
  for (const auto& m : res.history) history.push_back(m.dev_qwk);
  const double best = *std::max_element(history.begin(), history.end());
  const std::size_t earliest = static_cast<std::size_t>(std::find(history.begin(), history.end(), best) - history.begin());
  const bool selection = res.best.dev_qwk == best && res.best.epoch == earliest + 1;
  std::string trace;
  for (const double q : history) trace += (trace.empty() ? "" : " ") + fmt("%.3f", q);
  return {res.history.size() == 10 && best >= 0.8 && selection,
          std::to_string(res.history.size()) + " epochs: dev qwk [" + trace + "], best epoch " +
              std::to_string(res.best.epoch) + (selection ? "" : " (selection WRONG)")};
}

// ---------------------------------------------------------------- 8
Outcome constrained_decoding() {
  const auto item = ft::keyword_item();
  const std::vector<std::string> adversarial = {
      "the", "3.5", "", " 3", "3 ", "+3", "3a", "a3", "-", "--2", "1e2", "0x3", "\xef\xbc\x93", "\n", "\t2",
      "<|eos|>", "<|end|>", " rubric", "Score", "2,", "12345678901234567890", "NaN", "inf", "\xc2\xbd"};
  std::size_t handled = 0;
  for (const auto& raw : adversarial) {
    const auto r = sc::parse_score_token(raw, item);
    if (r.fallback_used && r.predicted == 0 && r.raw_token == raw) ++handled;
  }
  bool integers = true;
  for (int v = -3; v <= 60; ++v) {
    const auto r = sc::parse_score_token(std::to_string(v), item);
    integers = integers && !r.fallback_used && r.predicted == v && r.out_of_range == (v < 0 || v > 3);
  }

  // Live models: exactly one generated token, and the fallback biconditional.
  const auto responses = ft::keyword_responses(50, 8);
  const auto tok = glm::Tokenizer::build(ft::tokenizer_corpus(item, responses), 600);
  glm::ModelConfig mc;
  mc.n_layers = 1;
  mc.hidden_size = 32;
  mc.intermediate_size = 64;
  mc.n_heads = 2;
  mc.max_context = 256;
  mc.vocab_size = tok.size();

  std::size_t calls = 0, good = 0, fallbacks = 0, twos = 0;
  auto check = [&](const glm::Model& model) {
    for (const auto& r : responses) {
      const auto s = sc::predict_score(model, tok, item, r.text);
      glm::GenerateOptions o;
      o.stop_tokens.clear();
      const auto g = model.generate(sc::score_prompt_ids(tok, item, r.text), o);
      const bool integer = tok.score_value(g.tokens.at(0)).has_value();
      ++calls;
      if (g.tokens.size() == 1 && tok.token_string(g.tokens[0]) == s.raw_token && s.fallback_used == !integer &&
          (!s.fallback_used || s.predicted == 0)) {
        ++good;
      }
      fallbacks += s.fallback_used;
      twos += !s.fallback_used && s.predicted == 2;
    }
  };
  for (std::uint64_t seed = 1; seed <= 4; ++seed) check(glm::Model::random(mc, seed));

  // A model fitted to answer "2" exercises the integer path end to end.
  auto fitted = glm::Model::random(mc, 5);
  Rng rng(6);
  fitted.attach_adapters(4, 8, rng);
  ft::AdapterOptimizer opt(fitted, quant::MomentStorage::kFloat32);
  std::vector<ft::TrainingExample> examples;
  for (std::size_t i = 0; i < 10; ++i) {
    examples.push_back(ft::build_example_with_target(responses[i].id, sc::score_prompt_ids(tok, item, responses[i].text),
                                                     tok.score_token(2)));
  }
  for (int epoch = 0; epoch < 40; ++epoch) {
    for (const auto& ex : examples) opt.step(fitted, ex, 1e-2);
  }
  const std::size_t twos_before = twos;
  check(fitted);
  const std::size_t fitted_twos = twos - twos_before;

  const bool ok = handled == adversarial.size() && integers && good == calls && fitted_twos == responses.size();
  return {ok, "adversarial " + std::to_string(handled) + "/" + std::to_string(adversarial.size()) + ", integers " +
                  (integers ? "ok" : "WRONG") + ", live " + std::to_string(good) + "/" + std::to_string(calls) +
                  " one-token and biconditional (" + std::to_string(fallbacks) + " fallbacks, fitted model scored 2 on " +
                  std::to_string(fitted_twos) + "/" + std::to_string(responses.size()) + ")"};
}

// ---------------------------------------------------------------- 9
Outcome feedback_contract() {
  const auto sa = ft::keyword_item();
  data::ItemSpec essay;
  essay.id = "essay";
  essay.kind = data::ItemKind::kEssay;
  essay.min_score = 2;
  essay.max_score = 12;
  essay.rater_min = 1;
  essay.rater_max = 6;
  essay.rule = data::ResolvedRule::kSumOfRaters;
  essay.rubric_text = "Ideas, organization, style and conventions.";
  const auto responses = ft::keyword_responses(40, 9);
  auto corpus = ft::tokenizer_corpus(sa, responses);
  const auto more = ft::tokenizer_corpus(essay, responses);
  corpus.insert(corpus.end(), more.begin(), more.end());
  const auto tok = glm::Tokenizer::build(corpus, 600);

  glm::ModelConfig mc;
  mc.n_layers = 1;
  mc.hidden_size = 32;
  mc.intermediate_size = 64;
  mc.n_heads = 2;
  mc.max_context = 1024;
  mc.vocab_size = tok.size();
  const auto model = glm::Model::random(mc, 9);

  std::size_t within = 0, prefixed = 0, short_answers = 0;
  std::size_t max_sa = 0, max_essay = 0, stops = 0, capped = 0;
  for (int i = 0; i < 1000; ++i) {
    const bool is_essay = i % 2 == 1;
    const auto& item = is_essay ? essay : sa;
    const int predicted = item.min_score + i % (item.max_score - item.min_score + 1);
    sc::FeedbackOptions o;
    o.mode = glm::DecodeMode::kSample;
    o.seed = static_cast<std::uint64_t>(i);
    const auto& r = responses[static_cast<std::size_t>(i) % responses.size()];
    const auto fb = sc::generate_feedback(model, tok, item, r.text, predicted, o);
    const std::size_t cap = is_essay ? 256 : 128;
    if (fb.new_token_count <= cap) ++within;
    (is_essay ? max_essay : max_sa) = std::max(is_essay ? max_essay : max_sa, fb.new_token_count);
    stops += fb.stop == glm::StopReason::kStopToken;
    capped += fb.stop == glm::StopReason::kMaxTokens;
    if (!is_essay) {
      ++short_answers;
      if (fb.text.starts_with("The response was given a score of " + std::to_string(predicted) + " because")) {
        ++prefixed;
      }
    }
  }
  return {within == 1000 && prefixed == short_answers,
          "1000 generations, max tokens essay " + std::to_string(max_essay) + "/256 short " +
              std::to_string(max_sa) + "/128, prefix " + std::to_string(prefixed) + "/" +
              std::to_string(short_answers) + ", stopped " + std::to_string(stops) + " capped " +
              std::to_string(capped)};
}

// ---------------------------------------------------------------- 10
int cli(const std::vector<std::string>& args, std::string* err = nullptr) {
  std::ostringstream out, e;
  const int code = lorascore::cli::run(args, out, e);
  if (err) *err = e.str();
  return code;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "lorascore_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path config = root / "run.ini";
  std::ofstream(config) << "[model]\nn_layers = 2\nhidden_size = 32\nintermediate_size = 96\nn_heads = 2\n"
                           "max_context = 512\nvocab_limit = 1024\n\n"
                           "[train]\nepochs = 3\nrank = 8\nalpha = 16\nlearning_rate = 0.001\nseed = 7\n\n"
                           "[data]\nitem = demo\ndemo_train = 30\ndemo_dev = 15\ndemo_test = 15\n";
  const std::vector<fs::path> runs = {root / "first", root / "second"};
  for (const auto& dir : runs) {
    std::string err;
    if (cli({"train", "--config", config.string(), "--out", dir.string()}, &err) != 0) return {false, "train: " + err};
    if (cli({"score", "--run", dir.string(), "--split", "test"}, &err) != 0) return {false, "score: " + err};
    if (cli({"report", "--run", dir.string(), "--out", (dir / "report").string()}, &err) != 0) {
      return {false, "report: " + err};
    }
  }
  std::vector<std::string> files = {"adapter.lsad", "predictions.tsv", "report/benchmark.txt", "report/benchmark.tsv"};
  for (const auto& entry : fs::directory_iterator(runs[0] / "checkpoints")) {
    files.push_back("checkpoints/" + entry.path().filename().string());
  }
  std::sort(files.begin(), files.end());
  std::size_t same = 0;
  std::string differing;
  for (const auto& f : files) {
    if (fs::exists(runs[1] / f) && lorascore::io::read_file((runs[0] / f).string()) ==
                                       lorascore::io::read_file((runs[1] / f).string())) {
      ++same;
    } else {
      differing += " " + f;
    }
  }
  return {same == files.size() && files.size() >= 7,
          std::to_string(same) + "/" + std::to_string(files.size()) + " artifacts byte-identical" +
              (differing.empty() ? "" : ", differing:" + differing)};
}

struct Criterion {
  int number;
  const char* name;
  double limit_seconds;  // 0: no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

// Optional arguments select criteria by number.
int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  const std::vector<Criterion> criteria = {
      {1, "qwk-oracle-equivalence", 30, qwk_exhaustive},
      {2, "human-rater-reproduction", 60, rater_reproduction},
      {3, "gradient-checks", 60, gradient_checks},
      {4, "lora-invariants", 10, lora_invariants},
      {5, "nf4-quantization", 30, quantization},
      {6, "memory-accountant", 0, memory_accounting},
      {7, "synthetic-finetune", 300, synthetic_finetune},
      {8, "constrained-decoding", 0, constrained_decoding},
      {9, "feedback-contract", 0, feedback_contract},
      {10, "determinism", 0, determinism},
  };
  int failures = 0;
  std::size_t ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.number)) continue;
    ++ran;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    bool pass = o.pass;
    if (c.limit_seconds > 0 && secs >= c.limit_seconds) {
      pass = false;
      o.detail += "; over the " + fmt("%.0f", c.limit_seconds) + " s limit";
    }
    failures += pass ? 0 : 1;
    std::printf("%s  %2d %-26s %8.2fs  %s\n", pass ? "PASS" : "FAIL", c.number, c.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(ran) - failures, ran);
  return failures == 0 ? 0 : 1;
}
