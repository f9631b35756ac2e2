// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>

#include "config.hpp"
#include "lorascore/data.hpp"
#include "lorascore/error.hpp"
#include "lorascore/eval.hpp"
#include "lorascore/finetune.hpp"
#include "lorascore/log.hpp"
#include "lorascore/memory.hpp"
#include "lorascore/model.hpp"
#include "lorascore/nf4.hpp"
#include "lorascore/scoring.hpp"
#include "lorascore/serialize.hpp"
#include "lorascore/tokenizer.hpp"

namespace lorascore::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

constexpr const char* kVersion = "0.3.0";

// Holds <dir>/.lock for the lifetime of a command.
class OutputLock {
 public:
  explicit OutputLock(const std::string& dir) : path_(fs::path(dir) / ".lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) throw StateError("output directory " + dir + " is locked by another run (" + path_.string() + ")");
    std::fclose(f);
  }
  ~OutputLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
};

ordered_json versions() {
  return {{"lorascore", kVersion}, {"model_format", 1}, {"adapter_format", 1}, {"tokenizer_format", 1}};
}

void write_manifest(const std::string& dir, const std::string& command, ordered_json fields) {
  ordered_json m;
  m["command"] = command;
  for (auto& [k, v] : fields.items()) m[k] = v;
  m["versions"] = versions();
  m["output_directory"] = dir;
  io::write_file((fs::path(dir) / (command + ".manifest.json")).string(), m.dump(2) + "\n");
}

data::Registry load_registry(const std::string& manifest) {
  data::Registry r = manifest.empty() ? data::Registry::builtin() : data::Registry::load_manifest(manifest);
  if (!r.find("demo")) r.add(finetune::keyword_item());
  return r;
}

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

struct RunData {
  data::ItemSpec item;
  std::vector<data::ScoredResponse> responses;  // this item only
  data::SplitSpec splits;
};

RunData gather_data(const RunConfig& cfg) {
  const data::Registry registry = load_registry(cfg.registry);
  RunData d;
  d.item = registry.at(cfg.item);
  if (cfg.data.empty()) {
    if (cfg.item != "demo") throw ValidationError("--data is required for item " + cfg.item);
    const finetune::KeywordTask task;
    auto train = finetune::keyword_responses(cfg.demo_train, cfg.split_seed, task, "train");
    auto dev = finetune::keyword_responses(cfg.demo_dev, cfg.split_seed + 1, task, "dev");
    auto test = finetune::keyword_responses(cfg.demo_test, cfg.split_seed + 2, task, "test");
    data::Fold fold;
    for (const auto& r : train) fold.train.push_back(r.id);
    for (const auto& r : dev) fold.dev.push_back(r.id);
    for (const auto& r : test) fold.test.push_back(r.id);
    d.responses = std::move(train);
    d.responses.insert(d.responses.end(), dev.begin(), dev.end());
    d.responses.insert(d.responses.end(), test.begin(), test.end());
    d.splits.item = cfg.item;
    d.splits.folds.push_back(std::move(fold));
  } else {
    const auto ingested = data::ingest(cfg.data, registry);
    d.responses = data::select_item(ingested.responses, cfg.item);
    if (d.responses.empty()) throw ValidationError("no responses for item " + cfg.item + " in " + cfg.data);
    d.splits = data::make_splits(d.responses,
                                 cfg.split_manifest.empty() ? data::SplitScheme::kFiveFold : data::SplitScheme::kFixed,
                                 cfg.split_seed, cfg.split_manifest);
  }
  if (cfg.fold >= d.splits.folds.size()) {
    throw ValidationError("fold " + std::to_string(cfg.fold) + " out of range; split has " +
                          std::to_string(d.splits.folds.size()) + " folds");
  }
  data::check_partition(d.splits, d.responses);
  return d;
}

std::string format_epoch_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch-%02zu.lsad", epoch);
  return buf;
}

data::ItemSpec load_item(const std::string& path) {
  const auto j = nlohmann::json::parse(io::read_file(path));
  data::ItemSpec item;
  item.id = j.at("id").get<std::string>();
  item.kind = data::parse_item_kind(j.at("kind").get<std::string>());
  item.min_score = j.at("min_score").get<int>();
  item.max_score = j.at("max_score").get<int>();
  item.rater_min = j.at("rater_min").get<int>();
  item.rater_max = j.at("rater_max").get<int>();
  item.rule = data::parse_resolved_rule(j.at("resolved_rule").get<std::string>());
  item.rubric_text = j.at("rubric").get<std::string>();
  item.provenance = j.value("provenance", std::string{});
  item.validate();
  return item;
}

// The run directory written by `train`, as read back by later commands.
struct LoadedRun {
  RunConfig config;
  std::size_t fold = 0;
  data::ItemSpec item;
  std::vector<data::ScoredResponse> responses;
  data::SplitSpec splits;
  glm::Tokenizer tokenizer;
  glm::Model model;
};

LoadedRun load_run(const std::string& dir) {
  LoadedRun run;
  run.config = load_config(path_in(dir, "config.ini"));
  const data::ItemSpec item = load_item(path_in(dir, "item.json"));
  data::Registry registry;
  registry.add(item);
  run.item = item;
  run.responses = data::ingest(path_in(dir, "data.tsv"), registry).responses;
  auto splits = data::load_split_manifest(path_in(dir, "splits.tsv"), run.responses);
  run.splits = splits.at(item.id);
  run.fold = run.config.fold;
  run.tokenizer = glm::Tokenizer::load(path_in(dir, "tokenizer.json"));
  run.model = glm::Model::load(path_in(dir, "model.bin"));
  finetune::Checkpoint::load(path_in(dir, "adapter.lsad")).apply(run.model);
  return run;
}

std::vector<data::ScoredResponse> split_rows(const LoadedRun& run, const std::string& split) {
  const data::Fold& fold = run.splits.folds.at(run.fold);
  if (split == "all") return run.responses;
  if (split == "train") return data::pick(run.responses, fold.train);
  if (split == "dev") return data::pick(run.responses, fold.dev);
  if (split == "test") return data::pick(run.responses, fold.test);
  throw ValidationError("split must be train, dev, test or all");
}

ordered_json item_json(const data::ItemSpec& s) {
  return {{"id", s.id},
          {"kind", data::to_string(s.kind)},
          {"min_score", s.min_score},
          {"max_score", s.max_score},
          {"rater_min", s.rater_min},
          {"rater_max", s.rater_max},
          {"resolved_rule", data::to_string(s.rule)},
          {"rubric", s.rubric_text},
          {"provenance", s.provenance}};
}

// ---- commands ---------------------------------------------------------------

int cmd_train(const RunConfig& cfg, const std::string& out_dir, const std::string& config_path,
              std::ostream& out) {
  if (cfg.item.empty()) throw ValidationError("--item is required");
  OutputLock lock(out_dir);
  const RunData d = gather_data(cfg);
  const data::Fold& fold = d.splits.folds[cfg.fold];
  const auto train = data::pick(d.responses, fold.train);
  const auto dev = data::pick(d.responses, fold.dev);

  const auto tok = glm::Tokenizer::build(finetune::tokenizer_corpus(d.item, train), cfg.vocab_limit);
  glm::ModelConfig mc = cfg.model;
  mc.vocab_size = tok.size();
  glm::Model model = glm::Model::random(mc, cfg.model_seed);
  if (cfg.quantize) {
    quant::QuantOptions q;
    q.block_size = cfg.quant_block;
    model.quantize_base(q);
  }

  write_manifest(out_dir, "train",
                 {{"config_path", config_path},
                  {"config", serialize_config(cfg)},
                  {"data_paths", {{"data", cfg.data}, {"registry", cfg.registry}, {"split_manifest", cfg.split_manifest}}},
                  {"item", cfg.item},
                  {"seed", cfg.train.seed},
                  {"fold", cfg.fold}});
  io::write_file(path_in(out_dir, "config.ini"), serialize_config(cfg));
  io::write_file(path_in(out_dir, "item.json"), item_json(d.item).dump(2) + "\n");
  io::write_file(path_in(out_dir, "data.tsv"), data::to_canonical_tsv(d.responses));
  io::write_file(path_in(out_dir, "splits.tsv"), data::format_split_manifest({d.splits}));
  tok.save(path_in(out_dir, "tokenizer.json"));
  model.save(path_in(out_dir, "model.bin"));

  std::string metrics;
  const auto ckpt_dir = fs::path(out_dir) / "checkpoints";
  fs::create_directories(ckpt_dir);
  auto on_epoch = [&](const finetune::EpochMetrics& m, const finetune::Checkpoint& c) {
    ordered_json j = {{"epoch", m.epoch},       {"train_loss", m.train_loss}, {"dev_qwk", m.dev_qwk},
                      {"dev_accuracy", m.dev_accuracy}, {"lr", m.lr},     {"wall_seconds", m.wall_seconds}};
    metrics += j.dump() + "\n";
    io::write_file(path_in(out_dir, "metrics.jsonl"), metrics);
    c.save((ckpt_dir / format_epoch_name(m.epoch)).string());
    char line[160];
    std::snprintf(line, sizeof(line), "epoch %zu  train_loss %.4f  dev_qwk %s  dev_acc %s  %.1fs\n", m.epoch,
                  m.train_loss, eval::format_cell(m.dev_qwk).c_str(), eval::format_cell(m.dev_accuracy).c_str(),
                  m.wall_seconds);
    out << line << std::flush;
  };
  const auto result = finetune::train_item(model, tok, d.item, train, dev, cfg.train, on_epoch);
  const std::string best = result.best.serialize();
  io::write_file(path_in(out_dir, "adapter.lsad"), best);

  const double seconds = result.history.back().wall_seconds;
  std::string timing = "train_seconds = " + std::to_string(seconds) + "\n";
  if (cfg.baseline_seconds > 0.0) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f", seconds / cfg.baseline_seconds);
    timing += "baseline_seconds = " + std::to_string(cfg.baseline_seconds) + "\nrelative = " + buf + "\n";
  }
  io::write_file(path_in(out_dir, "timing.txt"), timing);
  out << "best epoch " << result.best.epoch << "  dev_qwk " << eval::format_cell(result.best.dev_qwk)
      << "  adapter " << io::hex64(io::fnv1a(best)) << "\n";
  return kExitOk;
}

int cmd_score(const std::string& run_dir, const std::string& split, const std::string& out_dir,
              std::ostream& out) {
  LoadedRun run = load_run(run_dir);
  OutputLock lock(out_dir);
  const auto rows = split_rows(run, split);
  write_manifest(out_dir, "score", {{"run", run_dir}, {"split", split}, {"item", run.item.id}, {"fold", run.fold}});
  const auto results = scoring::batch_score(run.model, run.tokenizer, run.item, rows);
  io::write_file(path_in(out_dir, "predictions.tsv"), scoring::format_predictions(results));
  std::size_t fallback = 0, errors = 0, out_of_range = 0;
  for (const auto& r : results) {
    if (!r.result) ++errors;
    else {
      fallback += r.result->fallback_used;
      out_of_range += r.result->out_of_range;
    }
  }
  out << "scored " << results.size() << " responses (" << fallback << " non-integer, " << out_of_range
      << " out of range, " << errors << " errors) -> " << path_in(out_dir, "predictions.tsv") << "\n";
  return kExitOk;
}

int cmd_feedback(const std::string& run_dir, const std::string& split, std::size_t limit,
                 const std::string& out_dir, std::ostream& out) {
  LoadedRun run = load_run(run_dir);
  OutputLock lock(out_dir);
  auto rows = split_rows(run, split);
  if (limit > 0 && rows.size() > limit) rows.resize(limit);
  write_manifest(out_dir, "feedback", {{"run", run_dir}, {"split", split}, {"limit", limit}, {"item", run.item.id}});
  std::string lines;
  for (const auto& r : rows) {
    const auto score = scoring::predict_score(run.model, run.tokenizer, run.item, r.text);
    const auto fb = scoring::generate_feedback(run.model, run.tokenizer, run.item, r.text, score.predicted);
    lines += scoring::feedback_json_line(r.id, run.item.id, score.predicted, fb) + "\n";
  }
  io::write_file(path_in(out_dir, "feedback.jsonl"), lines);
  out << "wrote feedback for " << rows.size() << " responses -> " << path_in(out_dir, "feedback.jsonl") << "\n";
  return kExitOk;
}

std::string confusion_text(const eval::ConfusionMatrix& m) {
  std::ostringstream os;
  os << "confusion (rows: reference, cols: predicted)\n     ";
  for (std::size_t j = 0; j < m.k; ++j) os << ' ' << std::to_string(m.offset + static_cast<int>(j));
  os << '\n';
  for (std::size_t i = 0; i < m.k; ++i) {
    os << "  " << m.offset + static_cast<int>(i) << " :";
    for (std::size_t j = 0; j < m.k; ++j) os << ' ' << m.at(i, j);
    os << '\n';
  }
  return os.str();
}

int cmd_eval(const std::string& predictions, const std::string& run_dir, const std::string& data_path,
             const std::string& registry_path, const std::string& item_id, bool raters,
             const std::string& split_manifest, const std::string& split, std::ostream& out) {
  data::ItemSpec item;
  std::vector<data::ScoredResponse> responses;
  if (!run_dir.empty()) {
    LoadedRun run = load_run(run_dir);
    item = run.item;
    responses = run.responses;
  } else {
    if (data_path.empty() || item_id.empty()) throw ValidationError("eval needs --run or --data with --item");
    const auto registry = load_registry(registry_path);
    item = registry.at(item_id);
    responses = data::select_item(data::ingest(data_path, registry).responses, item_id);
  }
  if (!split_manifest.empty()) {
    const auto splits = data::load_split_manifest(split_manifest, responses);
    const auto it = splits.find(item.id);
    if (it == splits.end()) throw SplitError("split manifest has no entries for item " + item.id);
    const auto& fold = it->second.folds.at(0);
    const auto& ids = split == "train" ? fold.train : split == "dev" ? fold.dev : fold.test;
    responses = data::pick(responses, ids);
  }
  std::vector<int> a, b;
  std::size_t clamped = 0;
  if (raters) {
    for (const auto& r : responses) {
      a.push_back(r.rater1);
      b.push_back(r.rater2);
    }
    const auto m = eval::confusion(a, b, item.rater_min, item.rater_max);
    out << "item " << item.id << "  rater1 vs rater2  n " << a.size() << "  qwk " << eval::format_cell(eval::qwk(m))
        << "  accuracy " << eval::format_cell(static_cast<double>(m.trace()) / static_cast<double>(m.total())) << "\n"
        << confusion_text(m);
    return kExitOk;
  }
  const std::string pred_path = predictions.empty() ? path_in(run_dir, "predictions.tsv") : predictions;
  std::map<std::string, int> gold;
  for (const auto& r : responses) gold[r.id] = r.resolved;
  std::size_t skipped = 0;
  for (const auto& p : scoring::parse_predictions(io::read_file(pred_path))) {
    if (!p.predicted) {
      ++skipped;
      continue;
    }
    const auto g = gold.find(p.id);
    if (g == gold.end()) throw ReportError("prediction for unknown id " + p.id);
    const int q = eval::clamp_score(*p.predicted, item.min_score, item.max_score);
    clamped += q != *p.predicted;
    a.push_back(g->second);
    b.push_back(q);
  }
  const auto m = eval::confusion(a, b, item.min_score, item.max_score);
  out << "item " << item.id << "  n " << a.size() << "  qwk " << eval::format_cell(eval::qwk(m)) << "  accuracy "
      << eval::format_cell(static_cast<double>(m.trace()) / static_cast<double>(m.total())) << "\n";
  if (clamped) out << clamped << " out-of-range predictions clamped to the item range\n";
  if (skipped) out << skipped << " rows without a prediction skipped\n";
  out << confusion_text(m);
  return kExitOk;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& mode_name, const std::string& out_dir,
               std::ostream& out) {
  if (runs.empty()) throw ValidationError("report needs at least one --run");
  eval::FoldMode mode;
  if (mode_name == "pooled") mode = eval::FoldMode::kPooled;
  else if (mode_name == "per-fold") mode = eval::FoldMode::kPerFoldMean;
  else throw ValidationError("--mode must be pooled or per-fold");
  OutputLock lock(out_dir);

  std::map<std::string, eval::BenchmarkRow> rows;
  std::vector<std::string> order;
  std::map<std::string, eval::GoldItem> gold;
  for (const auto& dir : runs) {
    const RunConfig cfg = load_config(path_in(dir, "config.ini"));
    const data::ItemSpec spec = load_item(path_in(dir, "item.json"));
    const std::string& item_id = spec.id;
    data::Registry registry;
    registry.add(spec);
    eval::GoldItem& g = gold[item_id];
    g.min_score = spec.min_score;
    g.max_score = spec.max_score;
    for (const auto& r : data::ingest(path_in(dir, "data.tsv"), registry).responses) g.scores[r.id] = r.resolved;

    if (!rows.count(cfg.name)) order.push_back(cfg.name);
    eval::BenchmarkRow& row = rows[cfg.name];
    row.name = cfg.name;
    std::vector<std::pair<std::string, int>> fold;
    for (const auto& p : scoring::parse_predictions(io::read_file(path_in(dir, "predictions.tsv")))) {
      if (p.predicted) fold.emplace_back(p.id, *p.predicted);
    }
    row.items[item_id].folds.push_back(std::move(fold));
  }
  std::vector<eval::BenchmarkRow> ordered;
  for (const auto& name : order) ordered.push_back(rows.at(name));
  const auto table = eval::build_benchmark(ordered, gold, mode);
  write_manifest(out_dir, "report", {{"runs", runs}, {"mode", mode_name}});
  io::write_file(path_in(out_dir, "benchmark.txt"), table.text());
  io::write_file(path_in(out_dir, "benchmark.tsv"), table.tsv());
  out << table.text();
  if (table.clamped) out << table.clamped << " out-of-range predictions clamped to the item range\n";
  return kExitOk;
}

int cmd_ingest(const std::string& data_path, const std::string& registry_path, std::uint64_t split_seed,
               const std::string& out_dir, std::ostream& out) {
  const auto registry = load_registry(registry_path);
  const auto result = data::ingest(data_path, registry);
  out << data::format_summary(result.summary, registry);
  if (out_dir.empty()) return kExitOk;
  OutputLock lock(out_dir);
  write_manifest(out_dir, "ingest", {{"data_paths", {{"data", data_path}, {"registry", registry_path}}}, {"split_seed", split_seed}});
  io::write_file(path_in(out_dir, "responses.tsv"), data::to_canonical_tsv(result.responses));
  io::write_file(path_in(out_dir, "summary.tsv"), data::format_summary(result.summary, registry));
  std::vector<data::SplitSpec> splits;
  for (const auto& s : result.summary) {
    splits.push_back(data::five_fold(data::select_item(result.responses, s.item), split_seed));
  }
  io::write_file(path_in(out_dir, "splits.tsv"), data::format_split_manifest(splits));
  return kExitOk;
}

int cmd_codebook(std::ostream& out) {
  for (const float v : quant::NF4Codebook::standard().levels()) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    out << buf << "\n";
  }
  return kExitOk;
}

std::uint64_t parse_count(const std::string& s) {
  double v = 0.0;
  try {
    std::size_t used = 0;
    v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
  } catch (const std::exception&) {
    throw ValidationError("--params: '" + s + "' is not a number");
  }
  if (!(v >= 0.0) || v > 1e18 || std::floor(v) != v) {
    throw ValidationError("--params must be a non-negative integer count");
  }
  return static_cast<std::uint64_t>(v);
}

int cmd_memory(const std::string& params, const std::string& mode, std::size_t rank, const std::string& shape,
               const std::string& optimizer, std::size_t block, bool no_double_quant, std::ostream& out) {
  quant::MemoryMode m;
  if (mode == "fp32") m.weights = quant::WeightMode::kFp32;
  else if (mode == "nf4") m.weights = quant::WeightMode::kNf4;
  else if (mode == "nf4-lora") m.weights = quant::WeightMode::kNf4Lora;
  else throw ValidationError("--mode must be fp32, nf4 or nf4-lora");
  if (optimizer == "fp32") m.optimizer = quant::OptimizerPrecision::kFp32;
  else if (optimizer == "8bit") m.optimizer = quant::OptimizerPrecision::kBlockwise8;
  else throw ValidationError("--optimizer must be fp32 or 8bit");
  m.block_size = block;
  m.double_quant = !no_double_quant;
  if (m.weights == quant::WeightMode::kNf4Lora) {
    std::uint64_t layers = 0, hidden = 0, inter = 0;
    char tail = 0;
    if (std::sscanf(shape.c_str(), "%llu,%llu,%llu%c", reinterpret_cast<unsigned long long*>(&layers),
                    reinterpret_cast<unsigned long long*>(&hidden), reinterpret_cast<unsigned long long*>(&inter),
                    &tail) != 3 ||
        layers == 0 || hidden == 0 || inter == 0) {
      throw ValidationError("--shape must be LAYERS,HIDDEN,INTERMEDIATE");
    }
    m.lora.rank = rank;
    for (std::uint64_t l = 0; l < layers; ++l) {
      for (int i = 0; i < 4; ++i) m.lora.layers.emplace_back(hidden, hidden);
      m.lora.layers.emplace_back(inter, hidden);
      m.lora.layers.emplace_back(inter, hidden);
      m.lora.layers.emplace_back(hidden, inter);
    }
  }
  out << quant::format_memory_report(quant::memory_report(parse_count(params), m));
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"lorascore: LoRA fine-tuning of a small decoder for rubric scoring", "lorascore"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  // train
  std::string config_path, out_dir;
  RunConfig cli_cfg;
  std::optional<std::string> item, data_path, registry, split_manifest, model_family, name;
  std::optional<std::size_t> fold, epochs, rank;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr, alpha, baseline;
  auto* train = app.add_subcommand("train", "fine-tune adapters for one item");
  train->add_option("--config", config_path, "INI run configuration");
  train->add_option("--item", item, "item id (\"demo\" for the synthetic task)");
  train->add_option("--data", data_path, "input TSV");
  train->add_option("--registry", registry, "registry manifest TSV");
  train->add_option("--split-manifest", split_manifest, "fixed split manifest TSV");
  train->add_option("--fold", fold, "fold index");
  train->add_option("--seed", seed, "training seed");
  train->add_option("--epochs", epochs, "epochs");
  train->add_option("--lr", lr, "learning rate");
  train->add_option("--rank", rank, "adapter rank");
  train->add_option("--alpha", alpha, "adapter alpha");
  train->add_option("--model-family", model_family, "model family tag (default, gemma-like)");
  train->add_option("--name", name, "row label for benchmark tables");
  train->add_option("--baseline-seconds", baseline, "reference wall-clock for relative timing");
  train->add_option("--out", out_dir, "run directory")->required();

  // score / feedback
  std::string run_dir, split = "test";
  std::size_t limit = 0;
  auto* score = app.add_subcommand("score", "predict scores with a trained run");
  score->add_option("--run", run_dir, "run directory from train")->required();
  score->add_option("--split", split, "train, dev, test or all");
  score->add_option("--out", out_dir, "output directory (default: the run directory)");
  auto* feedback = app.add_subcommand("feedback", "generate score explanations");
  feedback->add_option("--run", run_dir, "run directory from train")->required();
  feedback->add_option("--split", split, "train, dev, test or all");
  feedback->add_option("--limit", limit, "at most this many responses (0: all)");
  feedback->add_option("--out", out_dir, "output directory (default: the run directory)");

  // eval
  std::string predictions, eval_data, eval_registry, eval_item, eval_split_manifest;
  bool raters = false;
  auto* evalc = app.add_subcommand("eval", "agreement between predictions (or raters) and gold scores");
  evalc->add_option("--predictions", predictions, "predictions TSV");
  evalc->add_option("--run", run_dir, "run directory (gold data and default predictions)");
  evalc->add_option("--data", eval_data, "input TSV with gold scores");
  evalc->add_option("--registry", eval_registry, "registry manifest TSV");
  evalc->add_option("--item", eval_item, "item id");
  evalc->add_flag("--raters", raters, "compare rater1 with rater2 instead of predictions");
  evalc->add_option("--split-manifest", eval_split_manifest, "restrict to one split of this manifest");
  evalc->add_option("--split", split, "split to use with --split-manifest");

  // report
  std::vector<std::string> runs;
  std::string mode = "pooled";
  auto* report = app.add_subcommand("report", "benchmark table over run directories");
  report->add_option("--run", runs, "run directory (repeatable)")->required();
  report->add_option("--mode", mode, "pooled or per-fold");
  report->add_option("--out", out_dir, "output directory")->required();

  // ingest
  std::uint64_t split_seed = data::kDefaultSplitSeed;
  auto* ingest = app.add_subcommand("ingest", "validate and summarize a response file");
  ingest->add_option("--data", eval_data, "input TSV")->required();
  ingest->add_option("--registry", eval_registry, "registry manifest TSV");
  ingest->add_option("--split-seed", split_seed, "seed for the five-fold split");
  ingest->add_option("--out", out_dir, "output directory for canonical data and splits");

  auto* codebook = app.add_subcommand("codebook", "print the NF4 levels");

  std::string params, mem_mode = "fp32", shape, optimizer = "fp32";
  std::size_t mem_rank = 32, block = 64;
  bool no_dq = false;
  auto* memory = app.add_subcommand("memory", "training memory breakdown");
  memory->add_option("--params", params, "parameter count, e.g. 7e9")->required();
  memory->add_option("--mode", mem_mode, "fp32, nf4 or nf4-lora");
  memory->add_option("--rank", mem_rank, "adapter rank for nf4-lora");
  memory->add_option("--shape", shape, "LAYERS,HIDDEN,INTERMEDIATE for nf4-lora");
  memory->add_option("--optimizer", optimizer, "fp32 or 8bit optimizer state");
  memory->add_option("--block", block, "NF4 block size");
  memory->add_flag("--no-double-quant", no_dq, "store block constants as fp32");

  if (args.empty()) {
    err << app.help();
    return kExitUsage;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  struct SinkGuard {
    log::Sink previous;
    ~SinkGuard() { log::set_warning_sink(std::move(previous)); }
  } guard{log::set_warning_sink([&err](std::string_view m) { err << "warning: " << m << "\n"; })};
  try {
    if (*train) {
      RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
      if (item) cfg.item = *item;
      if (data_path) cfg.data = *data_path;
      if (registry) cfg.registry = *registry;
      if (split_manifest) cfg.split_manifest = *split_manifest;
      if (fold) cfg.fold = *fold;
      if (seed) cfg.train.seed = *seed;
      if (epochs) cfg.train.epochs = *epochs;
      if (lr) cfg.train.learning_rate = *lr;
      if (rank) cfg.train.rank = *rank;
      if (alpha) cfg.train.alpha = *alpha;
      if (model_family) cfg.train.model_family = *model_family;
      if (name) cfg.name = *name;
      if (baseline) cfg.baseline_seconds = *baseline;
      return cmd_train(cfg, out_dir, config_path, out);
    }
    if (*score) return cmd_score(run_dir, split, out_dir.empty() ? run_dir : out_dir, out);
    if (*feedback) return cmd_feedback(run_dir, split, limit, out_dir.empty() ? run_dir : out_dir, out);
    if (*evalc) {
      return cmd_eval(predictions, run_dir, eval_data, eval_registry, eval_item, raters, eval_split_manifest, split,
                      out);
    }
    if (*report) return cmd_report(runs, mode, out_dir, out);
    if (*ingest) return cmd_ingest(eval_data, eval_registry, split_seed, out_dir, out);
    if (*codebook) return cmd_codebook(out);
    if (*memory) return cmd_memory(params, mem_mode, mem_rank, shape, optimizer, block, no_dq, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace lorascore::cli
