/*
 * Copyright 2026 The balsub Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Subsample selection.
//
// balanced_select is the sequential greedy: start from a random row, then
// repeatedly take the unselected row with the smallest score
//
//   score(x) = sum over selected rows s of delta(s, x)^2.
//
// After each pick only delta(new row, x)^2 is added to every score, so one
// iteration costs O(Np). Scores are kept for every row, selected or not;
// selected rows are masked out of the argmin.
//
// Rows with the same level combination always share a score. When the level
// domain is small relative to N the selector scans the K distinct
// combinations instead of the rows, at O(Kp) per iteration, and picks
// exactly the rows the row scan would.

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "balsub/criterion.hpp"
#include "balsub/dataset.hpp"
#include "balsub/random.hpp"

namespace balsub {

enum class TieRule { lowest_index, seeded_random };

/// automatic scans level combinations when the level domain has at most N/2
/// points and rows otherwise.
enum class ScanMode { automatic, rows, patterns };

struct SelectionConfig {
  std::size_t n = 0;
  std::uint64_t seed = kDefaultSeed;
  TieRule tie_rule = TieRule::lowest_index;
  bool parallel = false;
  ScanMode scan = ScanMode::automatic;
};

/// Greedy scores for every row plus the selection mask.
struct DeltaTable {
  std::vector<std::uint64_t> scores;
  std::vector<std::uint8_t> selected;

  bool operator==(const DeltaTable&) const = default;
};

/// One greedy iteration, as reported to observers. score is the value of
/// the chosen row at the time it was picked (0 for the random start), and
/// f the balance criterion of the selection so far.
struct SelectionStep {
  std::size_t iteration = 0;
  std::size_t index = 0;
  std::uint64_t score = 0;
  double f = 0.0;
};

using SelectionObserver = std::function<void(const SelectionStep&, const DeltaTable&)>;

namespace detail {

inline void check_selection(const Dataset& data, std::size_t n) {
  if (data.empty()) throw DataError("cannot select from an empty dataset");
  if (n < 1) throw DataError("subsample size must be at least 1");
  if (n > data.size()) {
    throw DataError("subsample size " + std::to_string(n) + " exceeds the " +
                    std::to_string(data.size()) + " rows available");
  }
}

struct Best {
  std::uint64_t score = std::numeric_limits<std::uint64_t>::max();
  std::size_t index = std::numeric_limits<std::size_t>::max();

  void offer(std::uint64_t s, std::size_t i) noexcept {
    if (s < score || (s == score && i < index)) {
      score = s;
      index = i;
    }
  }
  void merge(const Best& other) noexcept { offer(other.score, other.index); }
};

inline constexpr std::size_t kScanBlock = 1024;

// Adds delta(row, x)^2 to the scores of rows [begin, end) and returns the
// best unselected row of the range.
inline Best update_range(const Dataset& data, std::span<const Level> row,
                         std::size_t begin, std::size_t end, DeltaTable& table) {
  const auto& q = data.spec().q;
  std::uint32_t d[kScanBlock];
  std::uint64_t best_score = std::numeric_limits<std::uint64_t>::max();
  std::size_t best_index = std::numeric_limits<std::size_t>::max();
  for (std::size_t start = begin; start < end; start += kScanBlock) {
    const std::size_t len = std::min(kScanBlock, end - start);
    std::fill_n(d, len, 0u);
    for (std::size_t j = 0; j < row.size(); ++j) {
      const Level* __restrict col = data.column(j).data() + start;
      const Level v = row[j];
      const std::uint32_t w = q[j];
      for (std::size_t i = 0; i < len; ++i) d[i] += col[i] == v ? w : 0u;
    }
    std::uint64_t* __restrict scores = table.scores.data() + start;
#ifndef NDEBUG
    for (std::size_t i = 0; i < len; ++i) {
      if (scores[i] > std::numeric_limits<std::uint64_t>::max() - std::uint64_t{d[i]} * d[i]) {
        throw std::overflow_error("greedy score overflow");
      }
    }
#endif
    for (std::size_t i = 0; i < len; ++i) scores[i] += std::uint64_t{d[i]} * d[i];
    const std::uint8_t* __restrict mask = table.selected.data() + start;
    for (std::size_t i = 0; i < len; ++i) {
      if (scores[i] < best_score && !mask[i]) {
        best_score = scores[i];
        best_index = start + i;
      }
    }
  }
  return Best{best_score, best_index};
}

// Rows grouped by level combination. Row lists are ascending, so the first
// unselected row of a group is its lowest-index candidate.
struct PatternIndex {
  std::size_t K = 0;
  std::vector<std::uint32_t> of_row;   // group of each row
  std::vector<Level> levels;           // K x p, column-major
  std::vector<std::size_t> offsets;    // K + 1 bounds into rows
  std::vector<std::size_t> rows;

  explicit PatternIndex(const Dataset& data) {
    const auto& spec = data.spec();
    const std::size_t N = data.size();
    const std::size_t p = spec.p();
    const std::size_t domain = spec.domain_size();
    if (domain == std::numeric_limits<std::size_t>::max()) {
      throw std::invalid_argument("level domain too large for the pattern scan");
    }
    constexpr auto kNone = std::numeric_limits<std::uint32_t>::max();
    const bool dense = domain <= 4 * N + 1024;
    std::vector<std::uint32_t> dense_ids(dense ? domain : 0, kNone);
    std::unordered_map<std::size_t, std::uint32_t> sparse_ids;
    std::vector<std::size_t> first_row;
    of_row.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
      std::size_t code = 0;
      for (std::size_t j = 0; j < p; ++j) code = code * spec.q[j] + data.level(i, j);
      std::uint32_t& id = dense ? dense_ids[code] : sparse_ids.try_emplace(code, kNone).first->second;
      if (id == kNone) {
        id = static_cast<std::uint32_t>(first_row.size());
        first_row.push_back(i);
      }
      of_row[i] = id;
    }
    K = first_row.size();
    levels.resize(K * p);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t j = 0; j < p; ++j) levels[j * K + k] = data.level(first_row[k], j);
    }
    offsets.assign(K + 1, 0);
    for (auto id : of_row) ++offsets[id + 1];
    for (std::size_t k = 0; k < K; ++k) offsets[k + 1] += offsets[k];
    rows.resize(N);
    std::vector<std::size_t> fill(offsets.begin(), offsets.end() - 1);
    for (std::size_t i = 0; i < N; ++i) rows[fill[of_row[i]]++] = i;
  }
};

inline bool use_patterns(const Dataset& data, ScanMode mode) {
  if (mode == ScanMode::rows) return false;
  if (mode == ScanMode::patterns) return true;
  return data.spec().domain_size() <= data.size() / 2;
}

}  // namespace detail

/// Incremental state of the greedy. Exposed so tests can step it and
/// compare against a from-scratch rescore.
class BalancedSelector {
 public:
  BalancedSelector(const Dataset& data, bool parallel = false, ScanMode scan = ScanMode::automatic)
      : data_(data), parallel_(parallel) {
    if (data.empty()) throw DataError("cannot select from an empty dataset");
    table_.selected.assign(data.size(), 0);
    if (detail::use_patterns(data, scan)) {
      patterns_.emplace(data);
      pattern_scores_.assign(patterns_->K, 0);
      heads_.assign(patterns_->offsets.begin(), patterns_->offsets.end() - 1);
      stale_ = true;
    } else {
      table_.scores.assign(data.size(), 0);
    }
  }

  /// Selects row i, updates every score and returns the best remaining row.
  detail::Best add(std::size_t i) {
    if (i >= data_.size() || table_.selected[i]) {
      throw std::invalid_argument("row " + std::to_string(i) + " is not selectable");
    }
    // The chosen row's score is exactly the growth of sum_{i<l} delta^2.
    pair_sum_ += score(i);
    table_.selected[i] = 1;
    chosen_.push_back(i);
    const auto row = data_.row(i);
    if (patterns_) return add_pattern(i, row);
    detail::Best best;
    const std::size_t N = data_.size();
#ifdef _OPENMP
    if (parallel_ && N >= 2 * detail::kScanBlock) {
      const std::size_t blocks = (N + detail::kScanBlock - 1) / detail::kScanBlock;
#pragma omp parallel
      {
        detail::Best local;
#pragma omp for schedule(static)
        for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(blocks); ++b) {
          const std::size_t lo = static_cast<std::size_t>(b) * detail::kScanBlock;
          local.merge(detail::update_range(data_, row, lo, std::min(N, lo + detail::kScanBlock),
                                           table_));
        }
#pragma omp critical(balsub_argmin)
        best.merge(local);
      }
      return best;
    }
#endif
    return detail::update_range(data_, row, 0, N, table_);
  }

  std::uint64_t score(std::size_t i) const {
    return patterns_ ? pattern_scores_[patterns_->of_row[i]] : table_.scores[i];
  }

  // Indices of unselected rows attaining the given score, ascending.
  std::vector<std::size_t> ties(std::uint64_t s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < data_.size(); ++i) {
      if (!table_.selected[i] && score(i) == s) out.push_back(i);
    }
    return out;
  }

  // Balance criterion of the current selection from the running pair sum.
  double current_f() const {
    const double n = static_cast<double>(chosen_.size());
    const auto& spec = data_.spec();
    const double sum_q = static_cast<double>(spec.level_sum());
    const double p = static_cast<double>(spec.p());
    const double f2 = 2.0 * static_cast<double>(pair_sum_) / (n * n) + sum_q * sum_q / n +
                      p - sum_q - p * p;
    return std::sqrt(std::max(0.0, f2));
  }

  /// Scores of every row; expanded from the combination scores on demand
  /// under the pattern scan.
  const DeltaTable& table() const {
    if (patterns_ && stale_) {
      table_.scores.resize(data_.size());
      for (std::size_t i = 0; i < data_.size(); ++i) table_.scores[i] = score(i);
      stale_ = false;
    }
    return table_;
  }
  const std::vector<std::size_t>& chosen() const noexcept { return chosen_; }
  unsigned __int128 pair_sum() const noexcept { return pair_sum_; }
  bool scans_patterns() const noexcept { return patterns_.has_value(); }

 private:
  detail::Best add_pattern(std::size_t i, std::span<const Level> row) {
    const auto& pi = *patterns_;
    const auto& q = data_.spec().q;
    const std::size_t K = pi.K;
    std::size_t& head = heads_[pi.of_row[i]];
    const std::size_t end = pi.offsets[pi.of_row[i] + 1];
    while (head < end && table_.selected[pi.rows[head]]) ++head;

    d_.assign(K, 0u);
    for (std::size_t j = 0; j < row.size(); ++j) {
      const Level* __restrict col = pi.levels.data() + j * K;
      const Level v = row[j];
      const std::uint32_t w = q[j];
      for (std::size_t k = 0; k < K; ++k) d_[k] += col[k] == v ? w : 0u;
    }
    detail::Best best;
    for (std::size_t k = 0; k < K; ++k) {
      pattern_scores_[k] += std::uint64_t{d_[k]} * d_[k];
      if (heads_[k] < pi.offsets[k + 1]) best.offer(pattern_scores_[k], pi.rows[heads_[k]]);
    }
    stale_ = true;
    return best;
  }

  const Dataset& data_;
  bool parallel_;
  mutable DeltaTable table_;
  mutable bool stale_ = false;
  std::optional<detail::PatternIndex> patterns_;
  std::vector<std::uint64_t> pattern_scores_;
  std::vector<std::size_t> heads_;
  std::vector<std::uint32_t> d_;
  std::vector<std::size_t> chosen_;
  unsigned __int128 pair_sum_ = 0;
};

/// Greedy balanced subsample of size config.n. The observer, when given,
/// is called after every pick with the updated table.
inline Subsample balanced_select(const Dataset& data, const SelectionConfig& config,
                                 const SelectionObserver& observer = {}) {
  detail::check_selection(data, config.n);
  Rng rng(config.seed);
  std::size_t next = rng.below(data.size());
  std::uint64_t next_score = 0;
  BalancedSelector sel(data, config.parallel, config.scan);
  for (std::size_t m = 0; m < config.n; ++m) {
    const detail::Best best = sel.add(next);
    if (observer) observer(SelectionStep{m, next, next_score, sel.current_f()}, sel.table());
    if (m + 1 == config.n) break;
    next = best.index;
    next_score = best.score;
    if (config.tie_rule == TieRule::seeded_random) {
      const auto candidates = sel.ties(best.score);
      next = candidates[rng.below(candidates.size())];
    }
  }
  return Subsample(data, sel.chosen());
}

/// Simple random sample without replacement (sparse Fisher-Yates), in draw
/// order.
inline Subsample uniform_select(const Dataset& data, const SelectionConfig& config) {
  detail::check_selection(data, config.n);
  Rng rng(config.seed);
  const std::size_t N = data.size();
  std::unordered_map<std::size_t, std::size_t> swapped;
  swapped.reserve(2 * config.n);
  auto at = [&](std::size_t i) {
    auto it = swapped.find(i);
    return it == swapped.end() ? i : it->second;
  };
  std::vector<std::size_t> out;
  out.reserve(config.n);
  for (std::size_t m = 0; m < config.n; ++m) {
    const std::size_t k = m + rng.below(N - m);
    const std::size_t pick = at(k);
    swapped[k] = at(m);
    out.push_back(pick);
  }
  return Subsample(data, std::move(out));
}

/// Scores recomputed from scratch for the given selected rows.
inline DeltaTable rescore(const Dataset& data, std::span<const std::size_t> selected) {
  DeltaTable t;
  t.scores.assign(data.size(), 0);
  t.selected.assign(data.size(), 0);
  const auto& spec = data.spec();
  std::vector<Level> x(spec.p());
  for (std::size_t s : selected) {
    if (s >= data.size()) throw DataError("selected row out of range");
    t.selected[s] = 1;
    const auto picked = data.row(s);
    for (std::size_t i = 0; i < data.size(); ++i) {
      for (std::size_t j = 0; j < spec.p(); ++j) x[j] = data.level(i, j);
      const std::uint64_t d = delta(picked, x, spec);
      t.scores[i] += d * d;
    }
  }
  return t;
}

inline DeltaTable rescore(const Dataset& data, const Subsample& partial) {
  return rescore(data, partial.indices());
}

}  // namespace balsub
