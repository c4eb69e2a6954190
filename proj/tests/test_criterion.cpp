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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fixtures.hpp"

namespace balsub {
namespace {

using testing::brute_f_squared;

// Counts pairs of rows by the number of coordinates on which they agree.
std::vector<std::size_t> agreement_histogram(const Dataset& d) {
  std::vector<std::size_t> hist(d.dims() + 1, 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t l = i + 1; l < d.size(); ++l) {
      std::size_t agree = 0;
      for (std::size_t j = 0; j < d.dims(); ++j) agree += d.level(i, j) == d.level(l, j);
      ++hist[agree];
    }
  }
  return hist;
}

TEST(Subsample, ValidatesIndices) {
  const Dataset d = testing::example1();
  EXPECT_THROW(Subsample(d, {0, 10}), DataError);
  EXPECT_THROW(Subsample(d, {3, 3}), DataError);
  const Subsample s(d, {9, 0});
  EXPECT_EQ(s.row(0)[0], 4u);
  EXPECT_EQ(s.row(1)[0], 0u);
}

TEST(BalanceStats, ExampleOneFullData) {
  const Dataset d = testing::example1();
  const BalanceStats s = balance_stats(Subsample::all(d), d.spec());
  EXPECT_EQ(s.single[0], std::vector<std::uint64_t>(5, 2));
  EXPECT_TRUE(s.pairwise.empty());
}

TEST(BalanceStats, SingleRow) {
  const Dataset d = testing::oa9();
  const BalanceStats s = balance_stats(Subsample(d, {4}), d.spec());
  for (const auto& counts : s.single) {
    EXPECT_EQ(std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}), 1u);
    EXPECT_EQ(std::count(counts.begin(), counts.end(), 1u), 1);
  }
}

TEST(BalanceStats, OrthogonalArrayPairsAppearOnce) {
  const Dataset d = testing::oa9();
  const BalanceStats s = balance_stats(Subsample::all(d), d.spec());
  for (const auto& table : s.pairwise) {
    for (auto c : table) EXPECT_EQ(c, 1u);
  }
}

TEST(BalanceStats, RejectsOutOfRangeLevels) {
  const std::vector<Level> rows{0, 1, 2, 3};
  EXPECT_THROW(balance_stats(rows, LevelSpec({3, 3})), DataError);
}

// Property: counts sum to n and pair tables marginalize to single counts.
TEST(BalanceStats, MarginalConsistency) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const Dataset d = testing::random_dataset(rng, 40, 4, 5);
    const Subsample sub = testing::random_subsample(d, rng, 30);
    const BalanceStats s = balance_stats(sub, d.spec());
    for (std::size_t j = 0; j < d.dims(); ++j) {
      ASSERT_EQ(std::accumulate(s.single[j].begin(), s.single[j].end(), std::uint64_t{0}), s.n);
      for (std::size_t k = j + 1; k < d.dims(); ++k) {
        std::uint64_t total = 0;
        for (Level u = 0; u < s.q[j]; ++u) {
          std::uint64_t row = 0;
          for (Level v = 0; v < s.q[k]; ++v) row += s.pair(j, k, u, v);
          ASSERT_EQ(row, s.single[j][u]);
          total += row;
        }
        ASSERT_EQ(total, s.n);
      }
    }
  }
}

TEST(FDirect, OrthogonalArrayIsZero) {
  const Dataset d = testing::oa9();
  EXPECT_EQ(f_direct(balance_stats(Subsample::all(d), d.spec())), 0.0);
}

TEST(FDirect, SingleBinaryCovariate) {
  // 4 ((1/2 - 1)^2 + (1/2 - 0)^2) = 2
  const LevelSpec spec({2});
  const Dataset d = Dataset::from_rows(spec, {{0}, {0}, {1}});
  EXPECT_NEAR(f_direct(balance_stats(Subsample(d, {0, 1}), spec)), std::sqrt(2.0), 1e-15);
  EXPECT_EQ(f_direct(balance_stats(Subsample(d, {0, 2}), spec)), 0.0);
}

TEST(Delta, Examples) {
  const LevelSpec spec({5, 5});
  const std::vector<Level> a{1, 2}, b{1, 3}, c{0, 0};
  EXPECT_EQ(delta(a, a, spec), 10u);
  EXPECT_EQ(delta(a, c, spec), 0u);
  EXPECT_EQ(delta(a, b, spec), 5u);
  EXPECT_EQ(delta(a, b, spec), delta(b, a, spec));
  const std::vector<Level> short_row{1};
  EXPECT_THROW(delta(a, short_row, spec), std::invalid_argument);
}

TEST(FPairwise, SingleBinaryCovariate) {
  const LevelSpec spec({2});
  const Dataset d = Dataset::from_rows(spec, {{0}, {0}});
  const Subsample s = Subsample::all(d);
  EXPECT_EQ(pairwise_delta_sum(s, spec), 4u);
  EXPECT_NEAR(f_pairwise(s, spec), std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(f_pairwise(s, spec), f_direct(balance_stats(s, spec)), 1e-12);
}

TEST(FPairwise, NineRunArray) {
  const Dataset d = testing::oa9();
  const Subsample s = Subsample::all(d);
  // 27 pairs agree in one column (delta 3), 9 in none
  const auto hist = agreement_histogram(d);
  EXPECT_EQ(hist, std::vector<std::size_t>({9, 27, 0, 0}));
  EXPECT_EQ(pairwise_delta_sum(s, d.spec()), 27u * 9u);
  EXPECT_NEAR(f_pairwise_squared(s, d.spec()), 0.0, 1e-12);
  EXPECT_NEAR(f_pairwise(s, d.spec()), 0.0, 1e-12);
}

TEST(FPairwise, TwentyFiveRunArray) {
  const Dataset d = testing::oa25();
  const Subsample s = Subsample::all(d);
  // 100 pairs agree in exactly one column (delta 5)
  const auto hist = agreement_histogram(d);
  EXPECT_EQ(hist[1], 100u);
  EXPECT_EQ(hist[2], 0u);
  EXPECT_EQ(pairwise_delta_sum(s, d.spec()), 2500u);
  EXPECT_NEAR(f_pairwise(s, d.spec()), 0.0, 1e-12);
  EXPECT_EQ(f_direct(balance_stats(s, d.spec())), 0.0);
}

// Property: both routes agree with each other and with the literal
// definition on random small instances.
TEST(FPairwise, MatchesDirectOnRandomSubsamples) {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const Dataset d = testing::random_dataset(rng, 60, 4, 5);
    const Subsample s = testing::random_subsample(d, rng, 30);
    const double direct = f_direct_squared(balance_stats(s, d.spec()));
    const double pairwise = f_pairwise_squared(s, d.spec());
    const double brute = brute_f_squared(s, d.spec());
    ASSERT_LE(std::abs(direct - pairwise), 1e-9 * std::max(1.0, direct)) << "trial " << trial;
    ASSERT_LE(std::abs(direct - brute), 1e-9 * std::max(1.0, brute)) << "trial " << trial;
    ASSERT_GE(direct, 0.0);
  }
}

TEST(FPairwise, LargeSumsStayExact) {
  // 3000 identical rows with sum q = 4000: the pair sum is ~7e13 and
  // f^2 = sum_j q_j (q_j - 1) + sum_{j != k} (q_j q_k - 1).
  const LevelSpec spec({1000, 1000, 1000, 1000});
  const Dataset d = Dataset::from_rows(spec, std::vector<std::vector<Level>>(3000, {7, 7, 7, 7}));
  const Subsample s = Subsample::all(d);
  const double expected = 4 * (1000.0 * 999.0) + 12 * (1e6 - 1);
  EXPECT_NEAR(f_pairwise_squared(s, spec), expected, 1e-9 * expected);
  EXPECT_NEAR(f_direct_squared(balance_stats(s, spec)), expected, 1e-9 * expected);
}

TEST(OrthogonalArray, Fixtures) {
  EXPECT_TRUE(is_orthogonal_array(Subsample::all(testing::oa9()), testing::oa9().spec()));
  EXPECT_TRUE(is_orthogonal_array(Subsample::all(testing::oa25()), testing::oa25().spec()));
  const Dataset ex1 = testing::example1();
  EXPECT_TRUE(is_orthogonal_array(Subsample::all(ex1), ex1.spec()));
  EXPECT_FALSE(is_orthogonal_array(Subsample(ex1, {0, 1, 2}), ex1.spec()));
}

TEST(OrthogonalArray, SizeNotDivisible) {
  const Dataset d = testing::oa9();
  for (std::size_t n = 1; n < 9; ++n) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    EXPECT_FALSE(is_orthogonal_array(Subsample(d, idx), d.spec()));
  }
}

// Property: f = 0 iff orthogonal array, on fixtures and perturbed copies.
TEST(OrthogonalArray, PerturbedArraysHavePositiveF) {
  auto rows = testing::oa9_rows();
  const LevelSpec spec({3, 3, 3});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      auto changed = rows;
      changed[i][j] = (changed[i][j] + 1) % 3;
      const Dataset d = Dataset::from_rows(spec, changed);
      const BalanceStats s = balance_stats(Subsample::all(d), spec);
      EXPECT_FALSE(is_orthogonal_array(s));
      EXPECT_GT(f_direct(s), 0.0);
    }
  }
}

// Property: f is invariant to row order and to relabeling levels.
TEST(FDirect, PermutationInvariance) {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const Dataset d = testing::random_dataset(rng, 30, 4, 5);
    const Subsample s = testing::random_subsample(d, rng, 20);
    const double f = f_direct(balance_stats(s, d.spec()));

    auto idx = s.indices();
    std::reverse(idx.begin(), idx.end());
    EXPECT_DOUBLE_EQ(f_direct(balance_stats(Subsample(d, idx), d.spec())), f);

    // cyclically relabel covariate 0
    std::vector<std::vector<Level>> cols(d.dims());
    for (std::size_t j = 0; j < d.dims(); ++j) {
      for (std::size_t i = 0; i < d.size(); ++i) {
        const Level v = d.level(i, j);
        cols[j].push_back(j == 0 ? (v + 1) % d.spec().q[0] : v);
      }
    }
    const Dataset relabeled(d.spec(), std::move(cols));
    EXPECT_NEAR(f_direct(balance_stats(Subsample(relabeled, s.indices()), d.spec())), f, 1e-12);
  }
}

}  // namespace
}  // namespace balsub
