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

// Shared fixtures and brute-force oracles for the test suites. The oracles
// work from first principles (explicit counting, explicit inverses) and do
// not call into the code paths they are used to check.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "balsub/balsub.hpp"

namespace balsub::testing {

using Rows = std::vector<std::vector<Level>>;

// 9-run, 3-factor, 3-level orthogonal array of strength two (0-based).
inline Rows oa9_rows() {
  return {{0, 0, 0}, {0, 1, 1}, {0, 2, 2}, {1, 0, 1}, {1, 1, 2},
          {1, 2, 0}, {2, 0, 2}, {2, 1, 0}, {2, 2, 1}};
}

inline Dataset oa9() { return Dataset::from_rows(LevelSpec({3, 3, 3}), oa9_rows()); }

// 5 x 5 full factorial: a 25-run orthogonal array with p = 2.
inline Dataset oa25() {
  Rows rows;
  for (Level a = 0; a < 5; ++a) {
    for (Level b = 0; b < 5; ++b) rows.push_back({a, b});
  }
  return Dataset::from_rows(LevelSpec({5, 5}), rows);
}

// One covariate, two repetitions of five levels: 1,1,2,2,...,5,5.
inline Dataset example1() {
  Rows rows;
  for (Level u = 0; u < 5; ++u) {
    rows.push_back({u});
    rows.push_back({u});
  }
  return Dataset::from_rows(LevelSpec({5}), rows);
}

// N = 1000 rows of two independent standard normals, each cut into five
// equal-width intervals over its observed range. The first seed from
// `seed` upwards whose data contain all 25 level pairs is used.
inline Dataset toy_dataset(std::uint64_t seed = 2022) {
  for (;; ++seed) {
    Rng rng(seed);
    std::vector<double> a(1000), b(1000);
    for (std::size_t i = 0; i < 1000; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
    }
    auto bin = [](const std::vector<double>& v) {
      const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
      const double width = (*hi - *lo) / 5.0;
      std::vector<Level> out;
      for (double x : v) {
        out.push_back(static_cast<Level>(std::min(4.0, std::floor((x - *lo) / width))));
      }
      return out;
    };
    std::vector<std::vector<Level>> cols{bin(a), bin(b)};
    bool seen[5][5] = {};
    for (std::size_t i = 0; i < 1000; ++i) seen[cols[0][i]][cols[1][i]] = true;
    bool complete = true;
    for (auto& r : seen) {
      for (bool s : r) complete = complete && s;
    }
    if (complete) return Dataset(LevelSpec({5, 5}), std::move(cols));
  }
}

// Random small data set: p in [1, max_p], q_j in [2, max_q].
inline Dataset random_dataset(Rng& rng, std::size_t N, std::size_t max_p, std::uint32_t max_q) {
  const std::size_t p = 1 + rng.below(max_p);
  std::vector<std::uint32_t> q(p);
  for (auto& v : q) v = static_cast<std::uint32_t>(2 + rng.below(max_q - 1));
  return gen_case1(N, LevelSpec(q), rng.next());
}

// Random subsample of size n in [1, max_n] (bounded by N).
inline Subsample random_subsample(const Dataset& data, Rng& rng, std::size_t max_n) {
  const std::size_t n = 1 + rng.below(std::min(max_n, data.size()));
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
  idx.resize(n);
  return Subsample(data, idx);
}

// f^2 evaluated literally from the definition: both sums over ordered
// covariate pairs, counts recomputed by scanning the rows.
inline double brute_f_squared(const Subsample& s, const LevelSpec& spec) {
  const double n = static_cast<double>(s.size());
  const std::size_t p = spec.p();
  double total = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    const double qj = spec.q[j];
    for (Level u = 0; u < spec.q[j]; ++u) {
      double count = 0;
      for (std::size_t i = 0; i < s.size(); ++i) count += s.row(i)[j] == u;
      total += qj * qj * std::pow(1.0 / qj - count / n, 2);
    }
  }
  for (std::size_t j = 0; j < p; ++j) {
    for (std::size_t k = 0; k < p; ++k) {
      if (j == k) continue;
      const double qj = spec.q[j], qk = spec.q[k];
      for (Level u = 0; u < spec.q[j]; ++u) {
        for (Level v = 0; v < spec.q[k]; ++v) {
          double count = 0;
          for (std::size_t i = 0; i < s.size(); ++i) count += s.row(i)[j] == u && s.row(i)[k] == v;
          total += qj * qk * std::pow(1.0 / (qj * qk) - count / n, 2);
        }
      }
    }
  }
  return total;
}

// All level combinations, last covariate fastest.
inline Rows full_factorial(const LevelSpec& spec) {
  Rows out{{}};
  for (std::size_t j = 0; j < spec.p(); ++j) {
    Rows next;
    for (const auto& prefix : out) {
      for (Level u = 0; u < spec.q[j]; ++u) {
        auto r = prefix;
        r.push_back(u);
        next.push_back(r);
      }
    }
    out = std::move(next);
  }
  return out;
}

// Dummy row coding written out by hand.
inline Eigen::VectorXd brute_dummy(const std::vector<Level>& x, const LevelSpec& spec) {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.num_params()));
  z(0) = 1;
  Eigen::Index off = 1;
  for (std::size_t j = 0; j < spec.p(); ++j) {
    if (x[j] > 0) z(off + x[j] - 1) = 1;
    off += spec.q[j] - 1;
  }
  return z;
}

// max_x z' (Z'Z)^{-1} z with an explicit inverse of the dummy information
// matrix.
inline double brute_max_leverage(const Subsample& s, const LevelSpec& spec) {
  const auto Q = static_cast<Eigen::Index>(spec.num_params());
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(Q, Q);
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::vector<Level> x(s.row(i).begin(), s.row(i).end());
    const Eigen::VectorXd z = brute_dummy(x, spec);
    M += z * z.transpose();
  }
  const Eigen::MatrixXd inv = M.inverse();
  double best = 0.0;
  for (const auto& x : full_factorial(spec)) {
    const Eigen::VectorXd z = brute_dummy(x, spec);
    best = std::max(best, z.dot(inv * z));
  }
  return best;
}

}  // namespace balsub::testing
