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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "balsub/random.hpp"

namespace balsub {

using Level = std::uint32_t;

/// Raised for malformed input data: bad files, degenerate covariates,
/// out-of-range level codes, subsample sizes exceeding the data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Number of levels of every covariate.
struct LevelSpec {
  std::vector<std::uint32_t> q;

  LevelSpec() = default;
  explicit LevelSpec(std::vector<std::uint32_t> levels) : q(std::move(levels)) {
    validate();
  }

  void validate() const {
    if (q.empty()) throw DataError("level spec needs at least one covariate");
    for (std::size_t j = 0; j < q.size(); ++j) {
      if (q[j] < 2) {
        throw DataError("degenerate covariate: column " + std::to_string(j) +
                        " has " + std::to_string(q[j]) + " level(s)");
      }
    }
  }

  std::size_t p() const noexcept { return q.size(); }

  // Q = 1 + sum(q_j - 1).
  std::size_t num_params() const noexcept {
    std::size_t total = 1;
    for (auto v : q) total += v - 1;
    return total;
  }

  std::uint64_t level_sum() const noexcept {
    return std::accumulate(q.begin(), q.end(), std::uint64_t{0});
  }

  // Column of the first dummy of covariate j in the coded matrix.
  std::size_t block_offset(std::size_t j) const noexcept {
    std::size_t off = 1;
    for (std::size_t k = 0; k < j; ++k) off += q[k] - 1;
    return off;
  }

  // Number of level combinations, saturating at the max of size_t.
  std::size_t domain_size() const noexcept {
    std::size_t total = 1;
    for (auto v : q) {
      if (total > std::numeric_limits<std::size_t>::max() / v) {
        return std::numeric_limits<std::size_t>::max();
      }
      total *= v;
    }
    return total;
  }

  bool operator==(const LevelSpec&) const = default;
};

/// Categorical data set. Level codes are stored column-major and are
/// 0-based: code u stands for level u + 1 in the usual 1-based notation.
class Dataset {
 public:
  Dataset() = default;

  Dataset(LevelSpec spec, std::vector<std::vector<Level>> columns,
          std::vector<std::vector<std::string>> labels = {},
          std::vector<std::string> names = {},
          std::optional<std::vector<double>> response = std::nullopt)
      : spec_(std::move(spec)),
        columns_(std::move(columns)),
        labels_(std::move(labels)),
        names_(std::move(names)),
        response_(std::move(response)) {
    spec_.validate();
    if (columns_.size() != spec_.p()) {
      throw DataError("dataset has " + std::to_string(columns_.size()) +
                      " columns but the level spec has " +
                      std::to_string(spec_.p()));
    }
    rows_ = columns_.front().size();
    for (std::size_t j = 0; j < columns_.size(); ++j) {
      if (columns_[j].size() != rows_) throw DataError("ragged columns");
      for (Level v : columns_[j]) {
        if (v >= spec_.q[j]) {
          throw DataError("level code " + std::to_string(v) +
                          " out of range for column " + std::to_string(j));
        }
      }
    }
    if (labels_.empty()) {
      labels_.resize(spec_.p());
      for (std::size_t j = 0; j < spec_.p(); ++j) {
        for (std::uint32_t u = 0; u < spec_.q[j]; ++u) {
          labels_[j].push_back(std::to_string(u + 1));
        }
      }
    }
    if (labels_.size() != spec_.p()) throw DataError("label table size mismatch");
    for (std::size_t j = 0; j < spec_.p(); ++j) {
      if (labels_[j].size() != spec_.q[j]) {
        throw DataError("column " + std::to_string(j) + " has " +
                        std::to_string(labels_[j].size()) + " labels for " +
                        std::to_string(spec_.q[j]) + " levels");
      }
    }
    if (names_.empty()) {
      for (std::size_t j = 0; j < spec_.p(); ++j) {
        names_.push_back("x" + std::to_string(j + 1));
      }
    }
    if (names_.size() != spec_.p()) throw DataError("column name count mismatch");
    if (response_ && response_->size() != rows_) {
      throw DataError("response has length " + std::to_string(response_->size()) +
                      ", expected " + std::to_string(rows_));
    }
  }

  /// Builds a data set from a row-major list of level vectors.
  static Dataset from_rows(LevelSpec spec, const std::vector<std::vector<Level>>& rows) {
    std::vector<std::vector<Level>> cols(spec.p());
    for (auto& c : cols) c.reserve(rows.size());
    for (const auto& r : rows) {
      if (r.size() != spec.p()) throw DataError("row length mismatch");
      for (std::size_t j = 0; j < r.size(); ++j) cols[j].push_back(r[j]);
    }
    return Dataset(std::move(spec), std::move(cols));
  }

  std::size_t size() const noexcept { return rows_; }
  std::size_t dims() const noexcept { return spec_.p(); }
  bool empty() const noexcept { return rows_ == 0; }
  const LevelSpec& spec() const noexcept { return spec_; }

  std::span<const Level> column(std::size_t j) const { return columns_[j]; }
  Level level(std::size_t i, std::size_t j) const { return columns_[j][i]; }

  std::vector<Level> row(std::size_t i) const {
    std::vector<Level> out(dims());
    for (std::size_t j = 0; j < dims(); ++j) out[j] = columns_[j][i];
    return out;
  }

  const std::vector<std::string>& labels(std::size_t j) const { return labels_[j]; }
  const std::string& label(std::size_t i, std::size_t j) const {
    return labels_[j][columns_[j][i]];
  }
  const std::vector<std::string>& names() const noexcept { return names_; }

  bool has_response() const noexcept { return response_.has_value(); }
  std::span<const double> response() const {
    if (!response_) return {};
    return *response_;
  }

  Dataset with_response(std::vector<double> y) const& {
    Dataset copy = *this;
    return std::move(copy).with_response(std::move(y));
  }
  Dataset with_response(std::vector<double> y) && {
    if (y.size() != rows_) throw DataError("response length mismatch");
    response_ = std::move(y);
    return std::move(*this);
  }

 private:
  LevelSpec spec_;
  std::vector<std::vector<Level>> columns_;
  std::vector<std::vector<std::string>> labels_;
  std::vector<std::string> names_;
  std::optional<std::vector<double>> response_;
  std::size_t rows_ = 0;
};

/// y = z' beta + N(0, sigma^2), z the dummy coding with level 0 as reference.
struct ResponseModel {
  std::vector<double> beta;
  double sigma = 1.0;
  std::uint64_t seed = kDefaultSeed;

  // All-ones coefficients with unit noise.
  static ResponseModel unit(const LevelSpec& spec, std::uint64_t seed = kDefaultSeed) {
    return ResponseModel{std::vector<double>(spec.num_params(), 1.0), 1.0, seed};
  }
};

namespace detail {

inline void check_rows(std::size_t N) {
  if (N < 1) throw DataError("N must be at least 1");
}

inline std::vector<std::vector<std::string>> default_labels(const LevelSpec& spec) {
  std::vector<std::vector<std::string>> labels(spec.p());
  for (std::size_t j = 0; j < spec.p(); ++j) {
    for (std::uint32_t u = 0; u < spec.q[j]; ++u) labels[j].push_back(std::to_string(u + 1));
  }
  return labels;
}

}  // namespace detail

/// Case 1: independent covariates, each uniform over its levels.
inline Dataset gen_case1(std::size_t N, const LevelSpec& spec, std::uint64_t seed) {
  detail::check_rows(N);
  spec.validate();
  Rng rng(seed);
  std::vector<std::vector<Level>> cols(spec.p(), std::vector<Level>(N));
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < spec.p(); ++j) {
      cols[j][i] = static_cast<Level>(rng.below(spec.q[j]));
    }
  }
  return Dataset(spec, std::move(cols));
}

/// Probability of level code u under case 2: (u + 1) / (q (q + 1) / 2).
inline double case2_probability(std::uint32_t q, std::uint32_t u) {
  return 2.0 * (u + 1) / (static_cast<double>(q) * (q + 1));
}

/// Case 2: independent covariates, level probabilities proportional to 1..q.
inline Dataset gen_case2(std::size_t N, const LevelSpec& spec, std::uint64_t seed) {
  detail::check_rows(N);
  spec.validate();
  Rng rng(seed);
  // Integer inverse-CDF on the triangular weights: draw r in [0, q(q+1)/2),
  // code u is the smallest with (u+1)(u+2)/2 > r.
  std::vector<std::vector<Level>> cols(spec.p(), std::vector<Level>(N));
  std::vector<std::vector<std::uint64_t>> cumulative(spec.p());
  for (std::size_t j = 0; j < spec.p(); ++j) {
    std::uint64_t acc = 0;
    for (std::uint32_t u = 0; u < spec.q[j]; ++u) {
      acc += u + 1;
      cumulative[j].push_back(acc);
    }
  }
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < spec.p(); ++j) {
      const auto& cum = cumulative[j];
      const std::uint64_t r = rng.below(cum.back());
      cols[j][i] = static_cast<Level>(std::upper_bound(cum.begin(), cum.end(), r) - cum.begin());
    }
  }
  return Dataset(spec, std::move(cols));
}

/// Maps a real value onto q equal-width intervals of [-3, 3]. Intervals are
/// half-open [a, b) except the last, which is closed; values below -3 go to
/// code 0 and values above 3 to code q - 1.
inline Level discretize(double value, std::uint32_t q) {
  if (value < -3.0) return 0;
  if (value >= 3.0) return q - 1;
  const double width = 6.0 / q;
  auto code = static_cast<std::int64_t>(std::floor((value + 3.0) / width));
  code = std::clamp<std::int64_t>(code, 0, q - 1);
  return static_cast<Level>(code);
}

/// Equicorrelated standard normal vector (unit variances, every pairwise
/// correlation 0.5) written into out: x_j = sqrt(.5) z_0 + sqrt(.5) z_j.
inline void equicorrelated_normal(Rng& rng, std::span<double> out) {
  const double common = rng.normal();
  const double w = std::sqrt(0.5);
  for (auto& x : out) x = w * common + w * rng.normal();
}

/// Case 3: discretized multivariate normal with correlation 0.5.
inline Dataset gen_case3(std::size_t N, const LevelSpec& spec, std::uint64_t seed) {
  detail::check_rows(N);
  spec.validate();
  Rng rng(seed);
  std::vector<std::vector<Level>> cols(spec.p(), std::vector<Level>(N));
  std::vector<double> x(spec.p());
  for (std::size_t i = 0; i < N; ++i) {
    equicorrelated_normal(rng, x);
    for (std::size_t j = 0; j < spec.p(); ++j) cols[j][i] = discretize(x[j], spec.q[j]);
  }
  return Dataset(spec, std::move(cols));
}

/// Dispatches on the simulation case number (1, 2 or 3).
inline Dataset gen_case(int which, std::size_t N, const LevelSpec& spec, std::uint64_t seed) {
  switch (which) {
    case 1: return gen_case1(N, spec, seed);
    case 2: return gen_case2(N, spec, seed);
    case 3: return gen_case3(N, spec, seed);
    default: throw std::invalid_argument("case must be 1, 2 or 3");
  }
}

// Mean response z' beta of one row under dummy coding.
inline double mean_response(std::span<const Level> row, const LevelSpec& spec,
                            std::span<const double> beta) {
  double mu = beta[0];
  std::size_t off = 1;
  for (std::size_t j = 0; j < spec.p(); ++j) {
    if (row[j] > 0) mu += beta[off + row[j] - 1];
    off += spec.q[j] - 1;
  }
  return mu;
}

/// Draws y_i = z_i' beta + eps_i for every row of data.
inline std::vector<double> gen_response(const Dataset& data, const ResponseModel& model) {
  const auto& spec = data.spec();
  if (model.beta.size() != spec.num_params()) {
    throw std::invalid_argument("beta has length " + std::to_string(model.beta.size()) +
                                ", model needs " + std::to_string(spec.num_params()));
  }
  if (!(model.sigma >= 0.0)) throw std::invalid_argument("sigma must be nonnegative");
  Rng rng(model.seed);
  std::vector<double> y(data.size(), model.beta[0]);
  std::size_t off = 1;
  for (std::size_t j = 0; j < spec.p(); ++j) {
    auto col = data.column(j);
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (col[i] > 0) y[i] += model.beta[off + col[i] - 1];
    }
    off += spec.q[j] - 1;
  }
  if (model.sigma > 0.0) {
    for (auto& v : y) v += model.sigma * rng.normal();
  }
  return y;
}

}  // namespace balsub
