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

// Repeated-response simulation comparing selection methods.
//
// The covariate data are fixed for an experiment. Every repetition t draws
// fresh response noise, re-seeds each selection method, fits OLS on the
// selected rows and records
//   - whether the information matrix is singular,
//   - ||beta_hat - beta||^2,
//   - the analytic worst-case prediction error sigma^2 (1 + max leverage).
// Afterwards the empirical worst-case prediction error is evaluated over the
// level domain with one fresh noisy response per (x, t).
//
// All randomness is addressed through derive_seed(master, stream, counter):
//   data            stream 1, counter 0
//   response noise  stream 2, counter t
//   selection       stream 16 + method id, counter t
//   test noise      stream 3, counter t

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "balsub/anova.hpp"
#include "balsub/criterion.hpp"
#include "balsub/dataset.hpp"
#include "balsub/random.hpp"
#include "balsub/selector.hpp"

namespace balsub {

enum class Method { balanced = 0, uniform = 1 };
enum class WspeMode { empirical, analytic, both };

inline const char* to_string(Method m) { return m == Method::balanced ? "balanced" : "uniform"; }

inline const char* to_string(WspeMode m) {
  switch (m) {
    case WspeMode::empirical: return "empirical";
    case WspeMode::analytic: return "analytic";
    default: return "both";
  }
}

inline constexpr std::uint64_t kStreamData = 1;
inline constexpr std::uint64_t kStreamNoise = 2;
inline constexpr std::uint64_t kStreamTestNoise = 3;
inline constexpr std::uint64_t kStreamSelect = 16;

struct ExperimentConfig {
  int data_case = 2;  // 1, 2 or 3; 0 when the data are supplied by the caller
  std::size_t N = 0;
  LevelSpec spec;
  std::size_t n = 0;
  std::size_t reps = 1;
  std::vector<Method> methods{Method::balanced, Method::uniform};
  ResponseModel model;  // beta and sigma; its seed is replaced per repetition
  std::uint64_t seed = kDefaultSeed;
  WspeMode wspe_mode = WspeMode::analytic;
  TieRule tie_rule = TieRule::lowest_index;
  bool parallel = false;

  void validate() const {
    if (reps < 1) throw std::invalid_argument("reps must be at least 1");
    if (n < 1) throw std::invalid_argument("n must be at least 1");
    if (n > N) {
      throw DataError("subsample size " + std::to_string(n) + " exceeds the " + std::to_string(N) +
                      " rows available");
    }
    if (methods.empty()) throw std::invalid_argument("no selection methods given");
    spec.validate();
    if (model.beta.size() != spec.num_params()) {
      throw std::invalid_argument("beta has length " + std::to_string(model.beta.size()) +
                                  ", model needs " + std::to_string(spec.num_params()));
    }
  }
};

struct RepetitionRecord {
  std::size_t rep = 0;
  Method method = Method::balanced;
  bool singular = true;
  double f = 0.0;
  double sq_error = std::numeric_limits<double>::quiet_NaN();
  double expected_sq_error = std::numeric_limits<double>::quiet_NaN();  // sigma^2 tr (Z'Z)^{-1}
  double max_leverage = std::numeric_limits<double>::quiet_NaN();
  double wspe_analytic = std::numeric_limits<double>::quiet_NaN();
};

struct MethodMetrics {
  Method method = Method::balanced;
  std::size_t reps = 0;
  std::size_t nonsingular = 0;
  double nonsingular_proportion = 0.0;
  double mse = std::numeric_limits<double>::quiet_NaN();
  double median_sq_error = std::numeric_limits<double>::quiet_NaN();
  double mean_f = 0.0;
  std::optional<double> wspe_empirical;
  std::optional<double> wspe_analytic;
  bool full_domain = true;

  bool all_singular() const noexcept { return nonsingular == 0; }
};

struct MetricsReport {
  ExperimentConfig config;
  std::vector<MethodMetrics> methods;
  std::vector<RepetitionRecord> records;

  bool all_singular() const {
    return std::all_of(methods.begin(), methods.end(),
                       [](const MethodMetrics& m) { return m.all_singular(); });
  }
  const MethodMetrics& at(Method m) const {
    for (const auto& mm : methods) {
      if (mm.method == m) return mm;
    }
    throw std::out_of_range("method not in report");
  }
};

/// T^{-1} sum_t ||beta_hat_t - beta||^2.
inline double mse(std::span<const Eigen::VectorXd> beta_hats, std::span<const double> beta) {
  if (beta_hats.empty()) throw std::invalid_argument("mse of an empty list");
  const Eigen::Map<const Eigen::VectorXd> b(beta.data(), static_cast<Eigen::Index>(beta.size()));
  double acc = 0.0;
  for (const auto& bh : beta_hats) {
    if (bh.size() != b.size()) throw std::invalid_argument("coefficient length mismatch");
    acc += (bh - b).squaredNorm();
  }
  return acc / static_cast<double>(beta_hats.size());
}

struct WspeResult {
  double value = 0.0;
  bool full_domain = true;
  std::size_t points = 0;
};

/// Empirical worst-case squared prediction error,
///   max_x T^{-1} sum_t (y_t(x) - z(x)' beta_hat_t)^2,
/// over the nonsingular fits, with y_t(x) = z(x)' beta + sigma eps drawn
/// from stream (model.seed, test noise, reps[t]). reps defaults to the
/// position of each fit. Singular fits are skipped.
inline WspeResult wspe_empirical(std::span<const OlsFit> fits, const ResponseModel& model,
                                 const LevelSpec& spec, std::span<const std::size_t> reps = {},
                                 const Dataset* fallback = nullptr,
                                 std::size_t cap = kEnumerationCap) {
  if (!reps.empty() && reps.size() != fits.size()) {
    throw std::invalid_argument("one repetition id per fit expected");
  }
  if (model.beta.size() != spec.num_params()) throw std::invalid_argument("beta length mismatch");

  std::vector<std::vector<Level>> domain;
  bool full = spec.domain_size() <= cap;
  if (full) {
    detail::for_each_combination(spec, [&](std::span<const Level> x) {
      domain.emplace_back(x.begin(), x.end());
    });
  } else {
    if (fallback == nullptr) {
      throw std::invalid_argument("level domain exceeds the enumeration cap and no data was given");
    }
    for (std::size_t i = 0; i < fallback->size(); ++i) domain.push_back(fallback->row(i));
  }

  const RowCoder dummy(spec, Coding::dummy);
  const RowCoder ortho(spec, Coding::orthonormal);
  Eigen::MatrixXd Zd(static_cast<Eigen::Index>(domain.size()), dummy.width());
  Eigen::MatrixXd Zo;
  for (std::size_t x = 0; x < domain.size(); ++x) dummy.code(domain[x], Zd.row(x));
  const Eigen::Map<const Eigen::VectorXd> beta(model.beta.data(),
                                               static_cast<Eigen::Index>(model.beta.size()));
  const Eigen::VectorXd mean = Zd * beta;

  Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(domain.size()));
  std::size_t used = 0;
  for (std::size_t t = 0; t < fits.size(); ++t) {
    const OlsFit& fit = fits[t];
    if (fit.singular) continue;
    Eigen::VectorXd pred;
    if (fit.coding == Coding::dummy) {
      pred = Zd * fit.beta_hat;
    } else {
      if (Zo.size() == 0) {
        Zo.resize(Zd.rows(), Zd.cols());
        for (std::size_t x = 0; x < domain.size(); ++x) ortho.code(domain[x], Zo.row(x));
      }
      pred = Zo * fit.beta_hat;
    }
    Rng rng(derive_seed(model.seed, kStreamTestNoise, reps.empty() ? t : reps[t]));
    for (Eigen::Index x = 0; x < acc.size(); ++x) {
      const double y = mean(x) + model.sigma * rng.normal();
      const double e = y - pred(x);
      acc(x) += e * e;
    }
    ++used;
  }
  if (used == 0) throw std::invalid_argument("wspe_empirical needs at least one nonsingular fit");
  WspeResult out;
  out.value = acc.maxCoeff() / static_cast<double>(used);
  out.full_domain = full;
  out.points = domain.size();
  return out;
}

namespace detail {

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
}

struct RepOutcome {
  RepetitionRecord record;
  OlsFit fit;
  bool full_domain = true;
};

inline RepOutcome run_repetition(const Dataset& data, const ExperimentConfig& cfg,
                                 std::span<const double> y, std::size_t t, Method method,
                                 bool parallel_scan) {
  const auto& spec = data.spec();
  SelectionConfig sel;
  sel.n = cfg.n;
  sel.seed = derive_seed(cfg.seed, kStreamSelect + static_cast<std::uint64_t>(method), t);
  sel.tie_rule = cfg.tie_rule;
  sel.parallel = parallel_scan;
  const Subsample s =
      method == Method::balanced ? balanced_select(data, sel) : uniform_select(data, sel);

  RepOutcome out;
  out.record.rep = t;
  out.record.method = method;
  out.record.f = f_direct(balance_stats(s, spec));
  std::vector<double> ys;
  ys.reserve(s.size());
  for (std::size_t i : s.indices()) ys.push_back(y[i]);
  out.fit = fit_ols(dummy_code(s, spec), ys);
  out.record.singular = out.fit.singular;
  if (!out.fit.singular) {
    const Eigen::Map<const Eigen::VectorXd> beta(cfg.model.beta.data(),
                                                 static_cast<Eigen::Index>(cfg.model.beta.size()));
    out.record.sq_error = (out.fit.beta_hat - beta).squaredNorm();
    const auto Q = out.fit.info_matrix.rows();
    const Eigen::MatrixXd inv = out.fit.info_matrix.llt().solve(Eigen::MatrixXd::Identity(Q, Q));
    out.record.expected_sq_error = cfg.model.sigma * cfg.model.sigma * inv.trace();
    if (cfg.wspe_mode != WspeMode::empirical) {
      const LeverageResult lev = max_leverage(out.fit, spec, &data);
      const double s2 = cfg.model.sigma * cfg.model.sigma;
      out.record.max_leverage = lev.value;
      out.record.wspe_analytic = s2 * (1.0 + lev.value);
      out.full_domain = lev.full_domain;
    }
  }
  return out;
}

}  // namespace detail

/// Runs the protocol on caller-supplied covariate data.
inline MetricsReport run_experiment(const ExperimentConfig& config, const Dataset& data) {
  ExperimentConfig cfg = config;
  cfg.N = data.size();
  cfg.spec = data.spec();
  cfg.validate();

  const std::size_t M = cfg.methods.size();
  const std::size_t T = cfg.reps;
  std::vector<detail::RepOutcome> outcomes(T * M);

  auto one_rep = [&](std::size_t t, bool parallel_scan) {
    ResponseModel noise = cfg.model;
    noise.seed = derive_seed(cfg.seed, kStreamNoise, t);
    const std::vector<double> y = gen_response(data, noise);
    for (std::size_t m = 0; m < M; ++m) {
      outcomes[t * M + m] = detail::run_repetition(data, cfg, y, t, cfg.methods[m], parallel_scan);
    }
  };

#ifdef _OPENMP
  if (cfg.parallel && T > 1) {
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(T); ++t) {
      try {
        one_rep(static_cast<std::size_t>(t), false);
      } catch (...) {
#pragma omp critical(balsub_experiment_failure)
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  } else
#endif
  {
    for (std::size_t t = 0; t < T; ++t) one_rep(t, cfg.parallel);
  }

  MetricsReport report;
  report.config = cfg;
  ResponseModel test_model = cfg.model;
  test_model.seed = cfg.seed;
  for (std::size_t m = 0; m < M; ++m) {
    MethodMetrics mm;
    mm.method = cfg.methods[m];
    mm.reps = T;
    std::vector<double> errors;
    std::vector<OlsFit> fits;
    std::vector<std::size_t> fit_reps;
    double analytic = 0.0;
    double f_sum = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      const auto& o = outcomes[t * M + m];
      report.records.push_back(o.record);
      f_sum += o.record.f;
      if (o.record.singular) continue;
      ++mm.nonsingular;
      errors.push_back(o.record.sq_error);
      analytic += o.record.wspe_analytic;
      mm.full_domain = mm.full_domain && o.full_domain;
      fits.push_back(o.fit);
      fit_reps.push_back(t);
    }
    mm.nonsingular_proportion = static_cast<double>(mm.nonsingular) / static_cast<double>(T);
    mm.mean_f = f_sum / static_cast<double>(T);
    if (mm.nonsingular > 0) {
      double total = 0.0;
      for (double e : errors) total += e;
      mm.mse = total / static_cast<double>(errors.size());
      mm.median_sq_error = detail::median(errors);
      if (cfg.wspe_mode != WspeMode::empirical) {
        mm.wspe_analytic = analytic / static_cast<double>(mm.nonsingular);
      }
      if (cfg.wspe_mode != WspeMode::analytic) {
        const WspeResult w = wspe_empirical(fits, test_model, cfg.spec, fit_reps, &data);
        mm.wspe_empirical = w.value;
        mm.full_domain = mm.full_domain && w.full_domain;
      }
    }
    report.methods.push_back(mm);
  }
  return report;
}

/// Generates the covariate data for config.data_case and runs the protocol.
inline MetricsReport run_experiment(const ExperimentConfig& config) {
  if (config.data_case < 1 || config.data_case > 3) {
    throw std::invalid_argument("run_experiment without data needs case 1, 2 or 3");
  }
  config.spec.validate();
  if (config.N < 1) throw std::invalid_argument("N must be at least 1");
  const Dataset data = gen_case(config.data_case, config.N, config.spec,
                                derive_seed(config.seed, kStreamData, 0));
  MetricsReport report = run_experiment(config, data);
  report.config.data_case = config.data_case;
  return report;
}

}  // namespace balsub
