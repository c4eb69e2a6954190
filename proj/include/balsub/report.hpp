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

// JSON and CSV serialization of diagnostics and experiment reports.
// Non-finite numbers are written as JSON null.

#pragma once

#include <cmath>
#include <optional>
#include <ostream>
#include <string>

#include <json.hpp>

#include "balsub/anova.hpp"
#include "balsub/csv.hpp"
#include "balsub/evaluate.hpp"

namespace balsub {

using Json = nlohmann::ordered_json;

namespace detail {

inline Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json number(const std::optional<double>& v) {
  return v ? number(*v) : Json(nullptr);
}

}  // namespace detail

inline Json to_json(const Diagnostics& d) {
  Json j;
  j["n"] = d.n;
  j["Q"] = d.Q;
  j["f"] = d.f;
  j["oa"] = d.oa;
  j["singular"] = d.singular;
  j["min_singular_value"] = d.min_singular_value;
  j["det_orthonormal"] = detail::number(d.det_orthonormal());
  j["det_bound"] = detail::number(d.det_bound());
  j["det_ratio"] = detail::number(d.det_ratio());
  j["log_det_orthonormal"] = detail::number(d.log_det_orthonormal);
  j["log_det_bound"] = d.log_det_bound;
  j["max_leverage"] = d.leverage ? detail::number(d.leverage->value) : Json(nullptr);
  j["leverage_bound"] = d.leverage_bound;
  j["leverage_ratio"] = detail::number(d.leverage_ratio());
  j["domain"] = !d.leverage || d.leverage->full_domain ? "full" : "partial";
  return j;
}

inline Json to_json(const ExperimentConfig& c) {
  Json j;
  j["case"] = c.data_case;
  j["N"] = c.N;
  j["q"] = c.spec.q;
  j["n"] = c.n;
  j["reps"] = c.reps;
  Json methods = Json::array();
  for (auto m : c.methods) methods.push_back(to_string(m));
  j["methods"] = methods;
  j["beta"] = c.model.beta;
  j["sigma"] = c.model.sigma;
  j["seed"] = c.seed;
  j["wspe"] = to_string(c.wspe_mode);
  j["tie_rule"] = c.tie_rule == TieRule::lowest_index ? "lowest-index" : "seeded-random";
  j["parallel"] = c.parallel;
  return j;
}

inline Json to_json(const MethodMetrics& m) {
  Json j;
  j["method"] = to_string(m.method);
  j["reps"] = m.reps;
  j["nonsingular"] = m.nonsingular;
  j["nonsingular_proportion"] = m.nonsingular_proportion;
  j["all_singular"] = m.all_singular();
  j["mse"] = detail::number(m.mse);
  j["median_sq_error"] = detail::number(m.median_sq_error);
  j["mean_f"] = m.mean_f;
  j["wspe_empirical"] = detail::number(m.wspe_empirical);
  j["wspe_analytic"] = detail::number(m.wspe_analytic);
  j["domain"] = m.full_domain ? "full" : "partial";
  return j;
}

inline Json to_json(const MetricsReport& r) {
  Json j;
  j["config"] = to_json(r.config);
  Json methods = Json::array();
  for (const auto& m : r.methods) methods.push_back(to_json(m));
  j["methods"] = methods;
  j["all_singular"] = r.all_singular();
  return j;
}

/// One row per method and repetition.
inline void write_tidy_csv(std::ostream& out, const MetricsReport& r) {
  out << "method,rep,singular,f,sq_error,expected_sq_error,max_leverage,wspe_analytic\n";
  auto num = [](double v) { return std::isfinite(v) ? detail::format_number(v) : std::string(); };
  for (const auto& rec : r.records) {
    out << to_string(rec.method) << ',' << rec.rep << ',' << (rec.singular ? 1 : 0) << ','
        << num(rec.f) << ',' << num(rec.sq_error) << ',' << num(rec.expected_sq_error) << ','
        << num(rec.max_leverage) << ',' << num(rec.wspe_analytic) << '\n';
  }
}

}  // namespace balsub
