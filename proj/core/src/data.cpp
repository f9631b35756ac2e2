// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#include "lorascore/data.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "lorascore/error.hpp"
#include "lorascore/rng.hpp"
#include "lorascore/serialize.hpp"
#include "lorascore/tsv.hpp"

namespace lorascore::data {

std::string to_string(ItemKind kind) { return kind == ItemKind::kEssay ? "essay" : "short_answer"; }

std::string to_string(ResolvedRule rule) {
  return rule == ResolvedRule::kSumOfRaters ? "sum_of_raters" : "adjudicated";
}

ItemKind parse_item_kind(std::string_view s) {
  if (s == "essay") return ItemKind::kEssay;
  if (s == "short_answer") return ItemKind::kShortAnswer;
  throw ValidationError("unknown item kind '" + std::string(s) + "'");
}

ResolvedRule parse_resolved_rule(std::string_view s) {
  if (s == "sum_of_raters") return ResolvedRule::kSumOfRaters;
  if (s == "adjudicated") return ResolvedRule::kAdjudicated;
  throw ValidationError("unknown resolved rule '" + std::string(s) + "'");
}

void ItemSpec::validate() const {
  if (id.empty()) throw ValidationError("item id is empty");
  if (min_score >= max_score) {
    throw ValidationError("item " + id + ": min_score must be below max_score");
  }
  if (rater_min > rater_max) throw ValidationError("item " + id + ": rater range is inverted");
  if (rule == ResolvedRule::kSumOfRaters &&
      (2 * rater_min != min_score || 2 * rater_max != max_score)) {
    throw ValidationError("item " + id + ": sum rule needs a resolved range twice the rater range");
  }
}

namespace {

int parse_int(std::string_view s, std::size_t line, const char* column) {
  int v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end || s.empty()) {
    throw ParseError(line, std::string("column ") + column + ": '" + std::string(s) +
                               "' is not an integer");
  }
  return v;
}

ItemSpec make_item(std::string id, ItemKind kind, int lo, int hi, ResolvedRule rule) {
  ItemSpec s;
  s.id = std::move(id);
  s.kind = kind;
  s.min_score = lo;
  s.max_score = hi;
  s.rule = rule;
  if (rule == ResolvedRule::kSumOfRaters) {
    s.rater_min = lo / 2;
    s.rater_max = hi / 2;
  } else {
    s.rater_min = lo;
    s.rater_max = hi;
  }
  s.rubric_text = "Score the response against the rubric for item " + s.id + ".";
  s.provenance = "placeholder";
  return s;
}

}  // namespace

Registry Registry::builtin() {
  Registry r;
  const int aes_ranges[8][2] = {{2, 12}, {1, 6}, {0, 3}, {0, 3}, {0, 4}, {0, 4}, {2, 24}, {10, 60}};
  for (int i = 0; i < 8; ++i) {
    const int set = i + 1;
    const auto rule = (set == 1 || set == 7 || set == 8) ? ResolvedRule::kSumOfRaters
                                                          : ResolvedRule::kAdjudicated;
    r.add(make_item("aes" + std::to_string(set), ItemKind::kEssay, aes_ranges[i][0], aes_ranges[i][1],
                    rule));
  }
  const int sas_max[10] = {3, 3, 2, 2, 3, 3, 2, 2, 2, 2};
  for (int i = 0; i < 10; ++i) {
    r.add(make_item("sas" + std::to_string(i + 1), ItemKind::kShortAnswer, 0, sas_max[i],
                    ResolvedRule::kAdjudicated));
  }
  return r;
}

Registry Registry::load_manifest(const std::string& path) {
  const std::string text = io::read_file(path);
  const auto rows = tsv::lines(text);
  if (rows.empty()) throw ParseError(1, "registry manifest has no header");
  const auto header = tsv::split(rows[0]);
  const std::vector<std::string> expect = {"item", "kind", "min", "max", "resolved_rule", "rubric_path"};
  if (header.size() < expect.size() || !std::equal(expect.begin(), expect.end(), header.begin())) {
    throw ParseError(1, "registry manifest header must start with item, kind, min, max, "
                        "resolved_rule, rubric_path");
  }
  const bool has_provenance = header.size() > 6 && header[6] == "provenance";
  const auto base = std::filesystem::path(path).parent_path();
  Registry r;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].empty()) continue;
    const auto f = tsv::split(rows[i]);
    if (f.size() != header.size()) {
      throw ParseError(i + 1, "expected " + std::to_string(header.size()) + " fields, got " +
                                  std::to_string(f.size()));
    }
    try {
      ItemSpec s = make_item(f[0], parse_item_kind(f[1]), parse_int(f[2], i + 1, "min"),
                             parse_int(f[3], i + 1, "max"), parse_resolved_rule(f[4]));
      s.rubric_path = f[5];
      s.provenance = has_provenance ? f[6] : "";
      if (!s.rubric_path.empty()) {
        const auto rubric = std::filesystem::path(s.rubric_path).is_absolute()
                                ? std::filesystem::path(s.rubric_path)
                                : base / s.rubric_path;
        s.rubric_text = io::read_file(rubric.string());
        while (!s.rubric_text.empty() &&
               (s.rubric_text.back() == '\n' || s.rubric_text.back() == '\r')) {
          s.rubric_text.pop_back();
        }
      }
      r.add(std::move(s));
    } catch (const ValidationError& e) {
      throw ParseError(i + 1, e.what());
    }
  }
  return r;
}

void Registry::write_manifest(const std::string& path) const {
  // Rubrics are written next to the manifest so the copy stands alone.
  const auto dir = std::filesystem::path(path).parent_path();
  std::string out = "item\tkind\tmin\tmax\tresolved_rule\trubric_path\tprovenance\n";
  for (const auto& [id, s] : items_) {
    const std::string rubric = "rubrics/" + id + ".txt";
    io::write_file((dir / rubric).string(), s.rubric_text);
    out += tsv::join({s.id, to_string(s.kind), std::to_string(s.min_score), std::to_string(s.max_score),
                      to_string(s.rule), rubric, s.provenance}) +
           "\n";
  }
  io::write_file(path, out);
}

void Registry::add(ItemSpec spec) {
  spec.validate();
  const std::string id = spec.id;
  items_[id] = std::move(spec);
}

const ItemSpec& Registry::at(std::string_view id) const {
  if (const auto* s = find(id)) return *s;
  throw ValidationError("unknown item '" + std::string(id) + "'");
}

const ItemSpec* Registry::find(std::string_view id) const {
  const auto it = items_.find(id);
  return it == items_.end() ? nullptr : &it->second;
}

std::vector<std::string> Registry::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, s] : items_) out.push_back(id);
  return out;
}

int resolve_score(int r1, int r2, ResolvedRule rule, std::optional<int> resolved_column) {
  if (rule == ResolvedRule::kSumOfRaters) return r1 + r2;
  if (!resolved_column) throw DataError("adjudicated rule needs a resolved score column");
  return *resolved_column;
}

std::size_t word_count(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (const char c : text) {
    const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

namespace {

enum class Layout { kCanonical, kEssayRaw, kShortRaw };

struct Columns {
  Layout layout;
  std::size_t id, item, text, r1, r2;
  std::optional<std::size_t> resolved;
  std::string item_prefix;
};

std::optional<std::size_t> column(const std::vector<std::string>& header, std::string_view name) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  return std::nullopt;
}

Columns detect_layout(const std::vector<std::string>& header) {
  auto need = [&](std::string_view name) {
    const auto c = column(header, name);
    if (!c) throw ParseError(1, "header is missing column '" + std::string(name) + "'");
    return *c;
  };
  if (column(header, "essay_set")) {
    return {Layout::kEssayRaw, need("essay_id"), need("essay_set"), need("essay"),
            need("rater1_domain1"), need("rater2_domain1"), column(header, "domain1_score"), "aes"};
  }
  if (column(header, "EssaySet")) {
    // The short-answer release adjudicates on the first score.
    return {Layout::kShortRaw, need("Id"), need("EssaySet"), need("EssayText"), need("Score1"),
            need("Score2"), need("Score1"), "sas"};
  }
  return {Layout::kCanonical, need("id"), need("item"), need("response"), need("rater1"),
          need("rater2"), column(header, "resolved"), ""};
}

void check_range(int v, int lo, int hi, const std::string& id, const char* what) {
  if (v < lo || v > hi) {
    throw ValidationError("row " + id + ": " + what + " " + std::to_string(v) + " outside " +
                          std::to_string(lo) + ".." + std::to_string(hi));
  }
}

}  // namespace

IngestResult ingest_text(std::string_view text, const Registry& registry) {
  const auto rows = tsv::lines(text);
  if (rows.empty()) throw ParseError(1, "input has no header row");
  const auto header = tsv::split(rows[0]);
  const Columns cols = detect_layout(header);
  IngestResult result;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const std::size_t line = i + 1;
    if (rows[i].empty()) continue;
    const auto f = tsv::split(rows[i]);
    if (f.size() != header.size()) {
      throw ParseError(line, "expected " + std::to_string(header.size()) + " fields, got " +
                                 std::to_string(f.size()));
    }
    ScoredResponse r;
    r.id = f[cols.id];
    if (r.id.empty()) throw ParseError(line, "empty id");
    r.item = cols.item_prefix + f[cols.item];
    r.text = cols.layout == Layout::kCanonical ? tsv::unescape(f[cols.text]) : f[cols.text];
    const ItemSpec* spec = registry.find(r.item);
    if (!spec) throw ValidationError("row " + r.id + ": unknown item '" + r.item + "'");
    if (r.text.empty()) throw ValidationError("row " + r.id + ": empty response text");
    r.rater1 = parse_int(f[cols.r1], line, "rater1");
    r.rater2 = parse_int(f[cols.r2], line, "rater2");
    std::optional<int> resolved_col;
    if (cols.resolved && !f[*cols.resolved].empty()) {
      resolved_col = parse_int(f[*cols.resolved], line, "resolved");
    }
    check_range(r.rater1, spec->rater_min, spec->rater_max, r.id, "rater1 score");
    check_range(r.rater2, spec->rater_min, spec->rater_max, r.id, "rater2 score");
    try {
      r.resolved = resolve_score(r.rater1, r.rater2, spec->rule, resolved_col);
    } catch (const DataError& e) {
      throw DataError("row " + r.id + ": " + e.what());
    }
    check_range(r.resolved, spec->min_score, spec->max_score, r.id, "resolved score");
    if (!seen.insert(r.item + '\t' + r.id).second) {
      throw ValidationError("row " + r.id + ": duplicate id within item " + r.item);
    }
    result.responses.push_back(std::move(r));
  }
  result.summary = summarize(result.responses);
  return result;
}

IngestResult ingest(const std::string& path, const Registry& registry) {
  return ingest_text(io::read_file(path), registry);
}

std::vector<ItemSummary> summarize(std::span<const ScoredResponse> responses) {
  std::map<std::string, ItemSummary> by_item;
  std::map<std::string, std::size_t> words;
  for (const auto& r : responses) {
    auto [it, fresh] = by_item.try_emplace(r.item);
    ItemSummary& s = it->second;
    if (fresh) {
      s.item = r.item;
      s.observed_min = s.observed_max = r.resolved;
    }
    ++s.count;
    words[r.item] += word_count(r.text);
    s.observed_min = std::min(s.observed_min, r.resolved);
    s.observed_max = std::max(s.observed_max, r.resolved);
  }
  std::vector<ItemSummary> out;
  for (auto& [item, s] : by_item) {
    s.avg_words = static_cast<double>(words[item]) / static_cast<double>(s.count);
    out.push_back(s);
  }
  return out;
}

std::string to_canonical_tsv(std::span<const ScoredResponse> responses) {
  std::string out = "id\titem\tresponse\trater1\trater2\tresolved\n";
  for (const auto& r : responses) {
    out += tsv::join({tsv::escape(r.id), r.item, tsv::escape(r.text), std::to_string(r.rater1),
                      std::to_string(r.rater2), std::to_string(r.resolved)}) +
           "\n";
  }
  return out;
}

std::vector<ScoredResponse> select_item(std::span<const ScoredResponse> responses,
                                        std::string_view item) {
  std::vector<ScoredResponse> out;
  for (const auto& r : responses) {
    if (r.item == item) out.push_back(r);
  }
  return out;
}

SplitSpec five_fold(std::span<const ScoredResponse> responses, std::uint64_t seed) {
  if (responses.empty()) throw ValidationError("cannot split an empty response set");
  const std::string& item = responses.front().item;
  for (const auto& r : responses) {
    if (r.item != item) throw ValidationError("five-fold split expects a single item");
  }
  const std::size_t n = responses.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  std::vector<int> fold_of(n);
  std::size_t pos = 0;
  for (int f = 0; f < 5; ++f) {
    const std::size_t size = n / 5 + (static_cast<std::size_t>(f) < n % 5 ? 1 : 0);
    for (std::size_t j = 0; j < size; ++j) fold_of[order[pos++]] = f;
  }

  SplitSpec spec;
  spec.item = item;
  for (int f = 0; f < 5; ++f) {
    Fold fold;
    for (std::size_t i = 0; i < n; ++i) {
      const int g = fold_of[i];
      if (g == f) {
        fold.test.push_back(responses[i].id);
      } else if (g == (f + 1) % 5) {
        fold.dev.push_back(responses[i].id);
      } else {
        fold.train.push_back(responses[i].id);
      }
    }
    spec.folds.push_back(std::move(fold));
  }
  return spec;
}

std::map<std::string, SplitSpec> parse_split_manifest(std::string_view text,
                                                      std::span<const ScoredResponse> responses) {
  const auto rows = tsv::lines(text);
  if (rows.empty() || tsv::split(rows[0]) != std::vector<std::string>{"item", "fold", "split", "id"}) {
    throw ParseError(1, "split manifest header must be: item, fold, split, id");
  }
  std::set<std::pair<std::string, std::string>> known;
  for (const auto& r : responses) known.emplace(r.item, r.id);

  std::map<std::string, SplitSpec> out;
  std::vector<std::string> missing;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].empty()) continue;
    const auto f = tsv::split(rows[i]);
    if (f.size() != 4) throw ParseError(i + 1, "expected 4 fields, got " + std::to_string(f.size()));
    const int fold = parse_int(f[1], i + 1, "fold");
    if (fold < 0 || fold > 64) throw ParseError(i + 1, "fold index out of range");
    SplitSpec& spec = out[f[0]];
    spec.item = f[0];
    if (spec.folds.size() <= static_cast<std::size_t>(fold)) spec.folds.resize(fold + 1);
    Fold& target = spec.folds[static_cast<std::size_t>(fold)];
    if (f[2] == "train") {
      target.train.push_back(f[3]);
    } else if (f[2] == "dev") {
      target.dev.push_back(f[3]);
    } else if (f[2] == "test") {
      target.test.push_back(f[3]);
    } else {
      throw ParseError(i + 1, "split must be train, dev or test, got '" + f[2] + "'");
    }
    if (!known.count({f[0], f[3]})) missing.push_back(f[0] + "/" + f[3]);
  }
  if (!missing.empty()) {
    std::string msg = "split manifest lists " + std::to_string(missing.size()) +
                      " ids missing from the data:";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    if (missing.size() > 20) msg += " ...";
    throw SplitError(msg);
  }
  return out;
}

std::map<std::string, SplitSpec> load_split_manifest(const std::string& path,
                                                     std::span<const ScoredResponse> responses) {
  return parse_split_manifest(io::read_file(path), responses);
}

std::string format_split_manifest(const std::vector<SplitSpec>& splits) {
  std::string out = "item\tfold\tsplit\tid\n";
  for (const auto& spec : splits) {
    for (std::size_t f = 0; f < spec.folds.size(); ++f) {
      const auto emit = [&](const std::vector<std::string>& ids, const char* name) {
        for (const auto& id : ids) out += tsv::join({spec.item, std::to_string(f), name, id}) + "\n";
      };
      emit(spec.folds[f].train, "train");
      emit(spec.folds[f].dev, "dev");
      emit(spec.folds[f].test, "test");
    }
  }
  return out;
}

SplitSpec make_splits(std::span<const ScoredResponse> responses, SplitScheme scheme,
                      std::uint64_t seed, const std::string& manifest_path) {
  if (responses.empty()) throw ValidationError("cannot split an empty response set");
  if (scheme == SplitScheme::kFiveFold) return five_fold(responses, seed);
  if (manifest_path.empty()) throw ValidationError("fixed split scheme needs a split manifest");
  auto all = load_split_manifest(manifest_path, responses);
  const std::string& item = responses.front().item;
  const auto it = all.find(item);
  if (it == all.end()) throw SplitError("split manifest has no entries for item " + item);
  return it->second;
}

void check_partition(const SplitSpec& spec, std::span<const ScoredResponse> responses) {
  std::unordered_set<std::string> ids;
  for (const auto& r : responses) {
    if (r.item == spec.item) ids.insert(r.id);
  }
  for (std::size_t f = 0; f < spec.folds.size(); ++f) {
    const Fold& fold = spec.folds[f];
    std::unordered_map<std::string, int> where;
    for (const auto* list : {&fold.train, &fold.dev, &fold.test}) {
      for (const auto& id : *list) {
        if (!where.emplace(id, 0).second) {
          throw SplitError("fold " + std::to_string(f) + ": id " + id + " appears in two splits");
        }
      }
    }
    if (where.size() != ids.size()) {
      throw SplitError("fold " + std::to_string(f) + " covers " + std::to_string(where.size()) +
                       " of " + std::to_string(ids.size()) + " responses");
    }
    for (const auto& [id, unused] : where) {
      if (!ids.count(id)) throw SplitError("fold " + std::to_string(f) + ": unknown id " + id);
    }
  }
}

std::vector<ScoredResponse> pick(std::span<const ScoredResponse> responses,
                                 std::span<const std::string> ids) {
  std::unordered_map<std::string, const ScoredResponse*> index;
  for (const auto& r : responses) index.emplace(r.id, &r);
  std::vector<ScoredResponse> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = index.find(id);
    if (it == index.end()) throw SplitError("id " + id + " not found in data");
    out.push_back(*it->second);
  }
  return out;
}

std::string format_summary(const std::vector<ItemSummary>& summary, const Registry& registry) {
  std::ostringstream os;
  os << "item\tkind\tcount\tavg_words\tobserved_range\tdeclared_range\n";
  for (const auto& s : summary) {
    const ItemSpec* spec = registry.find(s.item);
    char avg[32];
    std::snprintf(avg, sizeof(avg), "%.1f", s.avg_words);
    os << s.item << '\t' << (spec ? to_string(spec->kind) : "?") << '\t' << s.count << '\t' << avg
       << '\t' << s.observed_min << '-' << s.observed_max << '\t'
       << (spec ? std::to_string(spec->min_score) + "-" + std::to_string(spec->max_score) : "?")
       << '\n';
  }
  return os.str();
}

}  // namespace lorascore::data
