// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lorascore::data {

enum class ItemKind { kEssay, kShortAnswer };
enum class ResolvedRule { kSumOfRaters, kAdjudicated };

std::string to_string(ItemKind kind);
std::string to_string(ResolvedRule rule);
ItemKind parse_item_kind(std::string_view s);
ResolvedRule parse_resolved_rule(std::string_view s);

struct ItemSpec {
  std::string id;
  ItemKind kind = ItemKind::kShortAnswer;
  int min_score = 0;  // resolved-score range
  int max_score = 0;
  int rater_min = 0;  // single-rater range; half the resolved range under the sum rule
  int rater_max = 0;
  ResolvedRule rule = ResolvedRule::kAdjudicated;
  std::string rubric_text;
  std::string rubric_path;
  std::string provenance;

  void validate() const;
  int category_count() const { return max_score - min_score + 1; }
};

struct ScoredResponse {
  std::string id;
  std::string item;
  std::string text;
  int rater1 = 0;
  int rater2 = 0;
  int resolved = 0;

  bool operator==(const ScoredResponse&) const = default;
};

class Registry {
 public:
  // The eight essay sets and ten short-answer items of the public benchmark,
  // with placeholder rubric text.
  static Registry builtin();
  // Manifest TSV: item, kind, min, max, resolved_rule, rubric_path[, provenance].
  // Rubric paths are relative to the manifest's directory.
  static Registry load_manifest(const std::string& path);
  void write_manifest(const std::string& path) const;

  void add(ItemSpec spec);
  const ItemSpec& at(std::string_view id) const;
  const ItemSpec* find(std::string_view id) const;
  std::vector<std::string> ids() const;
  std::size_t size() const { return items_.size(); }

 private:
  std::map<std::string, ItemSpec, std::less<>> items_;
};

// r1 + r2 under the sum rule, otherwise the supplied resolved value.
int resolve_score(int r1, int r2, ResolvedRule rule, std::optional<int> resolved_column = std::nullopt);

struct ItemSummary {
  std::string item;
  std::size_t count = 0;
  double avg_words = 0.0;
  int observed_min = 0;
  int observed_max = 0;
};

struct IngestResult {
  std::vector<ScoredResponse> responses;  // file order
  std::vector<ItemSummary> summary;       // sorted by item id
};

// Accepts the canonical header (id, item, response, rater1, rater2, resolved)
// and the two raw benchmark layouts (see README). Responses in the canonical
// layout use backslash escapes.
IngestResult ingest_text(std::string_view text, const Registry& registry);
IngestResult ingest(const std::string& path, const Registry& registry);
std::vector<ItemSummary> summarize(std::span<const ScoredResponse> responses);
std::size_t word_count(std::string_view text);

// Canonical TSV, readable by ingest.
std::string to_canonical_tsv(std::span<const ScoredResponse> responses);

std::vector<ScoredResponse> select_item(std::span<const ScoredResponse> responses,
                                        std::string_view item);

struct Fold {
  std::vector<std::string> train, dev, test;
};

struct SplitSpec {
  std::string item;
  std::vector<Fold> folds;  // one for a fixed split, five for cross-validation
};

enum class SplitScheme { kFixed, kFiveFold };

inline constexpr std::uint64_t kDefaultSplitSeed = 20240601;

// Five folds of near-equal size (the first n % 5 get one extra); fold f is
// the test set of split f, fold f+1 (mod 5) its dev set, the rest train.
// Ids keep file order within each list.
SplitSpec five_fold(std::span<const ScoredResponse> responses, std::uint64_t seed = kDefaultSplitSeed);

// Manifest TSV: item, fold, split, id. Ids absent from the data raise SplitError.
std::map<std::string, SplitSpec> load_split_manifest(const std::string& path,
                                                     std::span<const ScoredResponse> responses);
std::map<std::string, SplitSpec> parse_split_manifest(std::string_view text,
                                                      std::span<const ScoredResponse> responses);
std::string format_split_manifest(const std::vector<SplitSpec>& splits);

SplitSpec make_splits(std::span<const ScoredResponse> responses, SplitScheme scheme,
                      std::uint64_t seed = kDefaultSplitSeed, const std::string& manifest_path = {});

// Validates that the three lists are pairwise disjoint and cover all responses.
void check_partition(const SplitSpec& spec, std::span<const ScoredResponse> responses);

std::vector<ScoredResponse> pick(std::span<const ScoredResponse> responses,
                                 std::span<const std::string> ids);

std::string format_summary(const std::vector<ItemSummary>& summary, const Registry& registry);

}  // namespace lorascore::data
