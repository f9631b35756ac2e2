// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace lorascore::eval {

// Rows are rater A, columns rater B; index 0 is min_score.
struct ConfusionMatrix {
  int offset = 0;
  std::size_t k = 0;
  std::vector<std::uint64_t> counts;  // k x k row-major

  std::uint64_t at(std::size_t i, std::size_t j) const { return counts[i * k + j]; }
  std::uint64_t total() const;
  std::uint64_t trace() const;
};

ConfusionMatrix confusion(std::span<const int> a, std::span<const int> b, int min_score, int max_score);

// Quadratic weighted kappa over the full declared range. Returns 1.0 (with a
// warning) when observed and expected disagreement are both zero.
double qwk(std::span<const int> a, std::span<const int> b, int min_score, int max_score);
double qwk(const ConfusionMatrix& m);
double accuracy(std::span<const int> a, std::span<const int> b);

struct AgreementReport {
  double qwk = 0.0;
  double accuracy = 0.0;
  std::size_t n = 0;
};

AgreementReport agreement(std::span<const int> a, std::span<const int> b, int min_score, int max_score);

// Predictions outside the item range are pulled to the nearest bound before scoring.
int clamp_score(int score, int min_score, int max_score);

enum class FoldMode { kPooled, kPerFoldMean };

struct ItemPredictions {
  std::vector<std::vector<std::pair<std::string, int>>> folds;  // (id, predicted) per fold
};

struct BenchmarkRow {
  std::string name;
  std::map<std::string, ItemPredictions> items;
};

struct GoldItem {
  int min_score = 0;
  int max_score = 0;
  std::map<std::string, int> scores;  // id -> resolved score
};

struct BenchmarkTable {
  FoldMode mode = FoldMode::kPooled;
  std::vector<std::string> items;
  std::vector<std::string> rows;
  std::vector<std::vector<std::optional<double>>> cells;  // rows x items
  std::vector<std::optional<double>> average;             // unweighted mean over covered items
  std::size_t clamped = 0;                                // predictions pulled into range

  std::string text() const;
  std::string tsv() const;
};

// Items are the union over rows, in sorted order. A row item without gold
// raises ReportError.
BenchmarkTable build_benchmark(const std::vector<BenchmarkRow>& rows,
                               const std::map<std::string, GoldItem>& gold, FoldMode mode);

std::string format_cell(double value);
std::string to_string(FoldMode mode);

}  // namespace lorascore::eval
