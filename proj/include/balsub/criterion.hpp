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

// Balance criterion of a subsample.
//
// For a subsample of n rows with single-level counts n_j(u) and pair counts
// n_jk(u, v),
//
//   f^2 = sum_j sum_u q_j^2 (1/q_j - n_j(u)/n)^2
//       + sum_{j != k} sum_{u,v} q_j q_k (1/(q_j q_k) - n_jk(u,v)/n)^2.
//
// f = 0 exactly when the subsample is an orthogonal array of strength two,
// and f < 1 guarantees a nonsingular information matrix. The same quantity
// can be written through the row coincidence score
//
//   delta(a, b) = sum_j q_j [a_j == b_j],
//
// as f^2 = 2/n^2 sum_{i<l} delta(x_i, x_l)^2 + C with
// C = (sum q_j)^2 / n + p - sum q_j - p^2. The greedy selector minimizes the
// pairwise sum one row at a time.

#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "balsub/dataset.hpp"

namespace balsub {

/// Ordered list of distinct rows of a data set, with the level codes cached
/// row-major.
class Subsample {
 public:
  Subsample() = default;

  Subsample(const Dataset& data, std::vector<std::size_t> indices)
      : indices_(std::move(indices)), p_(data.dims()) {
    std::unordered_set<std::size_t> seen;
    seen.reserve(indices_.size());
    rows_.reserve(indices_.size() * p_);
    for (std::size_t i : indices_) {
      if (i >= data.size()) {
        throw DataError("row index " + std::to_string(i) + " out of range for " +
                        std::to_string(data.size()) + " rows");
      }
      if (!seen.insert(i).second) throw DataError("duplicate row index " + std::to_string(i));
      for (std::size_t j = 0; j < p_; ++j) rows_.push_back(data.level(i, j));
    }
  }

  // Every row of the data set, in order.
  static Subsample all(const Dataset& data) {
    std::vector<std::size_t> idx(data.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return Subsample(data, std::move(idx));
  }

  std::size_t size() const noexcept { return indices_.size(); }
  bool empty() const noexcept { return indices_.empty(); }
  std::size_t dims() const noexcept { return p_; }
  const std::vector<std::size_t>& indices() const noexcept { return indices_; }
  std::span<const Level> levels() const noexcept { return rows_; }
  std::span<const Level> row(std::size_t i) const {
    return std::span<const Level>(rows_).subspan(i * p_, p_);
  }

 private:
  std::vector<std::size_t> indices_;
  std::vector<Level> rows_;
  std::size_t p_ = 0;
};

/// Level and level-pair counts of a subsample. Pair tables are stored for
/// j < k only, each as a q_j x q_k row-major block.
struct BalanceStats {
  std::size_t n = 0;
  std::vector<std::vector<std::uint64_t>> single;
  std::vector<std::vector<std::uint64_t>> pairwise;
  std::vector<std::uint32_t> q;

  std::size_t pair_slot(std::size_t j, std::size_t k) const {
    assert(j < k);
    const std::size_t p = q.size();
    return j * (2 * p - j - 1) / 2 + (k - j - 1);
  }
  std::uint64_t pair(std::size_t j, std::size_t k, Level u, Level v) const {
    return pairwise[pair_slot(j, k)][static_cast<std::size_t>(u) * q[k] + v];
  }
};

namespace detail {

inline void check_levels(std::span<const Level> rows, const LevelSpec& spec) {
  const std::size_t p = spec.p();
  if (rows.size() % p != 0) throw std::invalid_argument("row storage is not a multiple of p");
  for (std::size_t t = 0; t < rows.size(); ++t) {
    if (rows[t] >= spec.q[t % p]) {
      throw DataError("level code " + std::to_string(rows[t]) + " out of range for covariate " +
                      std::to_string(t % p) + " with " + std::to_string(spec.q[t % p]) +
                      " levels");
    }
  }
}

}  // namespace detail

/// Counts from row-major level codes (n rows of length p).
inline BalanceStats balance_stats(std::span<const Level> rows, const LevelSpec& spec) {
  detail::check_levels(rows, spec);
  const std::size_t p = spec.p();
  BalanceStats s;
  s.n = rows.size() / p;
  s.q = spec.q;
  s.single.resize(p);
  for (std::size_t j = 0; j < p; ++j) s.single[j].assign(spec.q[j], 0);
  s.pairwise.resize(p * (p - 1) / 2);
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t k = j + 1; k < p; ++k) {
      s.pairwise[s.pair_slot(j, k)].assign(std::size_t{spec.q[j]} * spec.q[k], 0);
    }
  }
  for (std::size_t i = 0; i < s.n; ++i) {
    const Level* r = rows.data() + i * p;
    for (std::size_t j = 0; j < p; ++j) {
      ++s.single[j][r[j]];
      for (std::size_t k = j + 1; k < p; ++k) {
        ++s.pairwise[s.pair_slot(j, k)][std::size_t{r[j]} * spec.q[k] + r[k]];
      }
    }
  }
  return s;
}

inline BalanceStats balance_stats(const Subsample& s, const LevelSpec& spec) {
  return balance_stats(s.levels(), spec);
}

/// f^2 straight from the counts. Each deviation is formed as an exact
/// integer numerator (n - q n_j(u), resp. n - q_j q_k n_jk(u,v)) so that
/// balanced counts give exactly zero.
inline double f_direct_squared(const BalanceStats& s) {
  if (s.n == 0) throw std::invalid_argument("empty subsample");
  const auto n = static_cast<std::int64_t>(s.n);
  const double n2 = static_cast<double>(s.n) * static_cast<double>(s.n);
  const std::size_t p = s.q.size();
  double single_sum = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    const auto q = static_cast<std::int64_t>(s.q[j]);
    for (auto c : s.single[j]) {
      const auto d = static_cast<double>(n - q * static_cast<std::int64_t>(c));
      single_sum += d * d;
    }
  }
  double pair_sum = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t k = j + 1; k < p; ++k) {
      const auto qq = static_cast<std::int64_t>(s.q[j]) * s.q[k];
      double block = 0.0;
      for (auto c : s.pairwise[s.pair_slot(j, k)]) {
        const auto d = static_cast<double>(n - qq * static_cast<std::int64_t>(c));
        block += d * d;
      }
      // Ordered pairs (j,k) and (k,j) contribute equally.
      pair_sum += 2.0 * block / static_cast<double>(qq);
    }
  }
  return (single_sum + pair_sum) / n2;
}

inline double f_direct(const BalanceStats& s) { return std::sqrt(f_direct_squared(s)); }

/// Coincidence score sum_j q_j [a_j == b_j].
inline std::uint64_t delta(std::span<const Level> a, std::span<const Level> b,
                           const LevelSpec& spec) {
  if (a.size() != spec.p() || b.size() != spec.p()) {
    throw std::invalid_argument("delta: row length does not match the level spec");
  }
  std::uint64_t d = 0;
  for (std::size_t j = 0; j < a.size(); ++j) d += a[j] == b[j] ? spec.q[j] : 0;
  return d;
}

/// sum_{i<l} delta(x_i, x_l)^2, accumulated exactly.
inline unsigned __int128 pairwise_delta_sum(const Subsample& s, const LevelSpec& spec) {
  unsigned __int128 total = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t l = i + 1; l < s.size(); ++l) {
      const std::uint64_t d = delta(s.row(i), s.row(l), spec);
      total += static_cast<unsigned __int128>(d) * d;
    }
  }
  return total;
}

/// f^2 through the pairwise identity 2/n^2 sum_{i<l} delta^2 + C. May come
/// out as a tiny negative number for balanced subsamples.
inline double f_pairwise_squared(const Subsample& s, const LevelSpec& spec) {
  if (s.empty()) throw std::invalid_argument("empty subsample");
  const unsigned __int128 n = s.size();
  const unsigned __int128 sum_q = spec.level_sum();
  const auto p = static_cast<double>(spec.p());
  // (2 S + n (sum q)^2) / n^2 - sum q - p (p - 1)
  const unsigned __int128 numerator = 2 * pairwise_delta_sum(s, spec) + n * sum_q * sum_q;
  const double nn = static_cast<double>(n) * static_cast<double>(n);
  return static_cast<double>(numerator) / nn - static_cast<double>(sum_q) - p * (p - 1.0);
}

inline double f_pairwise(const Subsample& s, const LevelSpec& spec) {
  return std::sqrt(std::max(0.0, f_pairwise_squared(s, spec)));
}

/// True when every pair of covariates shows every level pair equally often
/// (for p = 1: every level equally often).
inline bool is_orthogonal_array(const BalanceStats& s) {
  const std::size_t p = s.q.size();
  bool oa = true;
  if (p == 1) {
    if (s.n % s.q[0] != 0) {
      oa = false;
    } else {
      for (auto c : s.single[0]) oa = oa && c == s.n / s.q[0];
    }
  } else {
    for (std::size_t j = 0; j < p && oa; ++j) {
      for (std::size_t k = j + 1; k < p && oa; ++k) {
        const std::size_t qq = std::size_t{s.q[j]} * s.q[k];
        if (s.n % qq != 0) {
          oa = false;
          break;
        }
        for (auto c : s.pairwise[s.pair_slot(j, k)]) oa = oa && c == s.n / qq;
      }
    }
  }
  assert(oa == (f_direct(s) < 1e-12));
  return oa;
}

inline bool is_orthogonal_array(const Subsample& s, const LevelSpec& spec) {
  return is_orthogonal_array(balance_stats(s, spec));
}

/// Per-covariate single-level imbalance sum_u (1/q_j - n_j(u)/n)^2.
inline std::vector<double> covariate_imbalance(const BalanceStats& s) {
  std::vector<double> out;
  const double n = static_cast<double>(s.n);
  for (std::size_t j = 0; j < s.q.size(); ++j) {
    double acc = 0.0;
    for (auto c : s.single[j]) {
      const double d = 1.0 / s.q[j] - static_cast<double>(c) / n;
      acc += d * d;
    }
    out.push_back(acc);
  }
  return out;
}

}  // namespace balsub
