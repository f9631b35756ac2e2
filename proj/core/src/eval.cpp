// Copyright 2026 The lorascore Authors
// SPDX-License-Identifier: Apache-2.0

#include "lorascore/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "lorascore/error.hpp"
#include "lorascore/log.hpp"

namespace lorascore::eval {

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t n = 0;
  for (const auto c : counts) n += c;
  return n;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t n = 0;
  for (std::size_t i = 0; i < k; ++i) n += at(i, i);
  return n;
}

namespace {

__extension__ typedef unsigned __int128 Wide;

void check_pair(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) {
    throw ValidationError("score lists differ in length: " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  }
  if (a.empty()) throw ValidationError("score lists are empty");
}

}  // namespace

ConfusionMatrix confusion(std::span<const int> a, std::span<const int> b, int min_score, int max_score) {
  check_pair(a, b);
  if (min_score > max_score) throw ValidationError("score range is inverted");
  ConfusionMatrix m;
  m.offset = min_score;
  m.k = static_cast<std::size_t>(max_score - min_score + 1);
  m.counts.assign(m.k * m.k, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (const int s : {a[i], b[i]}) {
      if (s < min_score || s > max_score) {
        throw ValidationError("score " + std::to_string(s) + " at position " + std::to_string(i) +
                              " outside " + std::to_string(min_score) + ".." + std::to_string(max_score));
      }
    }
    ++m.counts[static_cast<std::size_t>(a[i] - min_score) * m.k +
               static_cast<std::size_t>(b[i] - min_score)];
  }
  return m;
}

double qwk(const ConfusionMatrix& m) {
  // Integer sums keep the statistic exactly symmetric and order independent.
  const std::uint64_t n = m.total();
  if (n == 0) throw ValidationError("confusion matrix is empty");
  std::vector<std::uint64_t> row(m.k, 0), col(m.k, 0);
  for (std::size_t i = 0; i < m.k; ++i) {
    for (std::size_t j = 0; j < m.k; ++j) {
      row[i] += m.at(i, j);
      col[j] += m.at(i, j);
    }
  }
  Wide observed = 0;  // sum w * count
  Wide expected = 0;  // sum w * row * col
  for (std::size_t i = 0; i < m.k; ++i) {
    for (std::size_t j = 0; j < m.k; ++j) {
      const std::uint64_t d = i > j ? i - j : j - i;
      observed += static_cast<Wide>(d * d) * m.at(i, j);
      expected += static_cast<Wide>(d * d) * row[i] * col[j];
    }
  }
  if (expected == 0) {
    log::warn("QWK undefined for a single shared category; reporting 1.0");
    return 1.0;
  }
  // kappa = 1 - (observed / n) / (expected / n^2)
  return 1.0 - static_cast<double>(observed * n) / static_cast<double>(expected);
}

double qwk(std::span<const int> a, std::span<const int> b, int min_score, int max_score) {
  return qwk(confusion(a, b, min_score, max_score));
}

double accuracy(std::span<const int> a, std::span<const int> b) {
  check_pair(a, b);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < a.size(); ++i) hits += a[i] == b[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(a.size());
}

AgreementReport agreement(std::span<const int> a, std::span<const int> b, int min_score, int max_score) {
  const ConfusionMatrix m = confusion(a, b, min_score, max_score);
  return {qwk(m), static_cast<double>(m.trace()) / static_cast<double>(m.total()), a.size()};
}

int clamp_score(int score, int min_score, int max_score) {
  return std::clamp(score, min_score, max_score);
}

std::string format_cell(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", value);
  if (std::string(buf) == "-0.000") return "0.000";
  return buf;
}

std::string to_string(FoldMode mode) {
  return mode == FoldMode::kPooled ? "pooled over folds" : "mean of per-fold values";
}

BenchmarkTable build_benchmark(const std::vector<BenchmarkRow>& rows,
                               const std::map<std::string, GoldItem>& gold, FoldMode mode) {
  BenchmarkTable t;
  t.mode = mode;
  std::set<std::string> items;
  for (const auto& r : rows) {
    for (const auto& [item, preds] : r.items) items.insert(item);
  }
  for (const auto& item : items) {
    if (!gold.count(item)) throw ReportError("no gold scores for item " + item);
  }
  t.items.assign(items.begin(), items.end());

  for (const auto& r : rows) {
    t.rows.push_back(r.name);
    std::vector<std::optional<double>> cells(t.items.size());
    double sum = 0.0;
    std::size_t covered = 0;
    for (std::size_t c = 0; c < t.items.size(); ++c) {
      const auto it = r.items.find(t.items[c]);
      if (it == r.items.end()) continue;
      const GoldItem& g = gold.at(t.items[c]);
      std::vector<double> fold_values;
      std::vector<int> all_pred, all_gold;
      for (const auto& fold : it->second.folds) {
        std::vector<int> pred, ref;
        for (const auto& [id, p] : fold) {
          const auto gi = g.scores.find(id);
          if (gi == g.scores.end()) {
            throw ReportError("no gold score for id " + id + " of item " + t.items[c]);
          }
          const int q = clamp_score(p, g.min_score, g.max_score);
          if (q != p) ++t.clamped;
          pred.push_back(q);
          ref.push_back(gi->second);
        }
        if (pred.empty()) continue;
        if (mode == FoldMode::kPerFoldMean) fold_values.push_back(qwk(ref, pred, g.min_score, g.max_score));
        all_pred.insert(all_pred.end(), pred.begin(), pred.end());
        all_gold.insert(all_gold.end(), ref.begin(), ref.end());
      }
      if (all_pred.empty()) continue;
      double value = 0.0;
      if (mode == FoldMode::kPooled) {
        value = qwk(all_gold, all_pred, g.min_score, g.max_score);
      } else {
        for (const double v : fold_values) value += v;
        value /= static_cast<double>(fold_values.size());
      }
      cells[c] = value;
      sum += value;
      ++covered;
    }
    t.cells.push_back(std::move(cells));
    t.average.push_back(covered ? std::optional<double>(sum / static_cast<double>(covered)) : std::nullopt);
  }
  return t;
}

namespace {

std::vector<std::vector<std::string>> grid(const BenchmarkTable& t) {
  std::vector<std::vector<std::string>> g;
  std::vector<std::string> head{"model"};
  head.insert(head.end(), t.items.begin(), t.items.end());
  head.emplace_back("Avg.");
  g.push_back(std::move(head));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    std::vector<std::string> line{t.rows[r]};
    for (const auto& cell : t.cells[r]) line.push_back(cell ? format_cell(*cell) : "");
    line.push_back(t.average[r] ? format_cell(*t.average[r]) : "");
    g.push_back(std::move(line));
  }
  return g;
}

}  // namespace

std::string BenchmarkTable::text() const {
  const auto g = grid(*this);
  std::vector<std::size_t> width(g.front().size(), 0);
  for (const auto& line : g) {
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], line[c].size());
  }
  std::string out = "QWK by item (" + to_string(mode) + ")\n";
  for (const auto& line : g) {
    std::string row;
    for (std::size_t c = 0; c < line.size(); ++c) {
      const std::string pad(width[c] - line[c].size(), ' ');
      if (c == 0) {
        row += line[c] + pad;
      } else {
        row += "  " + pad + line[c];
      }
    }
    while (!row.empty() && row.back() == ' ') row.pop_back();
    out += row + "\n";
  }
  return out;
}

std::string BenchmarkTable::tsv() const {
  std::string out = "# qwk " + to_string(mode) + "\n";
  for (const auto& line : grid(*this)) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c) out += '\t';
      out += line[c];
    }
    out += '\n';
  }
  return out;
}

}  // namespace lorascore::eval
