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

// balsub command-line driver.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 every repetition of
// every method produced a singular fit.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "balsub/balsub.hpp"

namespace {

using namespace balsub;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitSingular = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InputOptions {
  std::string input;
  std::vector<std::string> categorical;
  std::string response;

  CsvSchema schema() const {
    CsvSchema s;
    s.categorical = categorical;
    if (!response.empty()) s.response = response;
    return s;
  }
};

void add_input_options(CLI::App* cmd, InputOptions& in, bool required) {
  auto* opt = cmd->add_option("--input", in.input, "CSV file with a header row");
  if (required) opt->required();
  cmd->add_option("--categorical", in.categorical,
                  "Comma-separated categorical columns (default: all but the response)")
      ->delimiter(',');
  cmd->add_option("--response", in.response, "Numeric response column");
}

// Applies --threads; returns whether the parallel scan should be used.
bool apply_threads(int threads) {
  if (threads < 0) throw UsageError("--threads must be nonnegative");
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
  return threads != 1 && omp_get_max_threads() > 1;
#else
  return false;
#endif
}

TieRule parse_tie_rule(const std::string& s) {
  if (s == "lowest-index") return TieRule::lowest_index;
  if (s == "seeded-random") return TieRule::seeded_random;
  throw UsageError("unknown tie rule '" + s + "'");
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  return out;
}

std::vector<std::size_t> read_indices(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open indices file '" + path + "'");
  std::vector<std::size_t> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    const std::string token = line.substr(first, last - first + 1);
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc{} || ptr != token.data() + token.size()) {
      throw DataError("bad index '" + token + "' on line " + std::to_string(lineno) + " of " + path);
    }
    out.push_back(value);
  }
  if (out.empty()) throw DataError("indices file '" + path + "' is empty");
  return out;
}

// ---------------------------------------------------------------- subsample

struct SubsampleOptions {
  InputOptions in;
  std::size_t n = 0;
  std::string method = "balanced";
  std::uint64_t seed = kDefaultSeed;
  std::string output;
  std::string subsample_out;
  std::string report;
  std::string tie_rule = "lowest-index";
  int threads = 0;
  bool verbose = false;
};

int cmd_subsample(const SubsampleOptions& o) {
  SelectionConfig cfg;
  cfg.n = o.n;
  cfg.seed = o.seed;
  cfg.tie_rule = parse_tie_rule(o.tie_rule);
  cfg.parallel = apply_threads(o.threads);
  if (o.method != "balanced" && o.method != "uniform") {
    throw UsageError("unknown method '" + o.method + "'");
  }
  const Dataset data = ingest_csv(o.in.input, o.in.schema());

  const auto start = std::chrono::steady_clock::now();
  Subsample s;
  if (o.method == "balanced") {
    SelectionObserver trace;
    if (o.verbose) {
      trace = [](const SelectionStep& step, const DeltaTable&) {
        Json line;
        line["iteration"] = step.iteration;
        line["index"] = step.index;
        line["score"] = step.score;
        line["f"] = step.f;
        std::cerr << line.dump() << '\n';
      };
    }
    s = balanced_select(data, cfg, trace);
  } else {
    s = uniform_select(data, cfg);
  }
  const double elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  std::ostringstream idx;
  for (std::size_t i : s.indices()) idx << i << '\n';
  if (o.output.empty()) {
    std::cout << idx.str();
  } else {
    open_output(o.output) << idx.str();
  }
  if (!o.subsample_out.empty()) {
    auto out = open_output(o.subsample_out);
    write_csv(out, data, std::span<const std::size_t>(s.indices()),
              o.in.response.empty() ? "y" : o.in.response);
  }
  if (!o.report.empty()) {
    const BalanceStats stats = balance_stats(s, data.spec());
    Json r;
    Json config;
    config["input"] = o.in.input;
    config["categorical"] = data.names();
    config["response"] = o.in.response.empty() ? Json(nullptr) : Json(o.in.response);
    config["method"] = o.method;
    config["n"] = o.n;
    config["seed"] = o.seed;
    config["tie_rule"] = o.tie_rule;
    r["config"] = config;
    r["N"] = data.size();
    r["q"] = data.spec().q;
    r["n"] = s.size();
    r["f"] = f_direct(stats);
    r["oa"] = is_orthogonal_array(stats);
    r["covariate_imbalance"] = covariate_imbalance(stats);
    r["timing_ms"] = elapsed_ms;
    open_output(o.report) << r.dump(2) << '\n';
  }
  return kExitOk;
}

// ------------------------------------------------------------------ inspect

struct InspectOptions {
  InputOptions in;
  std::string indices;
  std::string output;
};

int cmd_inspect(const InspectOptions& o) {
  const Dataset data = ingest_csv(o.in.input, o.in.schema());
  const Subsample s =
      o.indices.empty() ? Subsample::all(data) : Subsample(data, read_indices(o.indices));
  const Diagnostics d = diagnose(s, data.spec(), &data);
  Json j = to_json(d);
  j["covariate_imbalance"] = covariate_imbalance(balance_stats(s, data.spec()));
  if (o.output.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    open_output(o.output) << j.dump(2) << '\n';
  }
  return kExitOk;
}

// ----------------------------------------------------------------- simulate

struct SimulateOptions {
  InputOptions in;
  int data_case = 0;
  std::size_t N = 10000;
  std::vector<std::uint32_t> q;
  std::size_t p = 0;
  std::string q_rule = "increment";
  std::size_t n = 0;
  long long reps = 1;
  std::vector<std::string> methods{"balanced", "uniform"};
  std::uint64_t seed = kDefaultSeed;
  std::string wspe = "analytic";
  double sigma = 1.0;
  std::string out;
  std::string tie_rule = "lowest-index";
  int threads = 0;
};

// q_j = j + 1 for "increment", q_j = K for "constant:K".
std::vector<std::uint32_t> levels_from_rule(std::size_t p, const std::string& rule) {
  std::vector<std::uint32_t> q(p);
  if (rule == "increment") {
    for (std::size_t j = 0; j < p; ++j) q[j] = static_cast<std::uint32_t>(j + 2);
    return q;
  }
  if (rule.starts_with("constant:")) {
    const std::string k = rule.substr(9);
    std::uint32_t v = 0;
    auto [ptr, ec] = std::from_chars(k.data(), k.data() + k.size(), v);
    if (ec != std::errc{} || ptr != k.data() + k.size()) throw UsageError("bad --q-rule '" + rule + "'");
    std::fill(q.begin(), q.end(), v);
    return q;
  }
  throw UsageError("unknown --q-rule '" + rule + "'");
}

int cmd_simulate(const SimulateOptions& o) {
  if (o.reps < 1) throw UsageError("--reps must be at least 1");
  if (o.n < 1) throw UsageError("--n must be at least 1");
  if (o.out.empty()) throw UsageError("--out is required");
  const bool external = !o.in.input.empty();
  if (external == (o.data_case != 0)) throw UsageError("give exactly one of --case or --input");
  if (!external && (o.data_case < 1 || o.data_case > 3)) throw UsageError("--case must be 1, 2 or 3");
  if (!(o.sigma >= 0.0)) throw UsageError("--sigma must be nonnegative");

  ExperimentConfig cfg;
  cfg.data_case = o.data_case;
  cfg.N = o.N;
  cfg.n = o.n;
  cfg.reps = static_cast<std::size_t>(o.reps);
  cfg.seed = o.seed;
  cfg.tie_rule = parse_tie_rule(o.tie_rule);
  cfg.parallel = apply_threads(o.threads);
  cfg.methods.clear();
  for (const auto& m : o.methods) {
    if (m == "balanced") {
      cfg.methods.push_back(Method::balanced);
    } else if (m == "uniform") {
      cfg.methods.push_back(Method::uniform);
    } else {
      throw UsageError("unknown method '" + m + "'");
    }
  }
  if (o.wspe == "empirical") {
    cfg.wspe_mode = WspeMode::empirical;
  } else if (o.wspe == "analytic") {
    cfg.wspe_mode = WspeMode::analytic;
  } else if (o.wspe == "both") {
    cfg.wspe_mode = WspeMode::both;
  } else {
    throw UsageError("unknown --wspe mode '" + o.wspe + "'");
  }

  MetricsReport report;
  if (external) {
    const Dataset data = ingest_csv(o.in.input, o.in.schema());
    cfg.spec = data.spec();
    cfg.model = ResponseModel::unit(cfg.spec);
    cfg.model.sigma = o.sigma;
    report = run_experiment(cfg, data);
  } else {
    if (!o.q.empty() && o.p != 0) throw UsageError("give either --q or --p, not both");
    if (o.q.empty() && o.p == 0) throw UsageError("one of --q or --p is required");
    try {
      cfg.spec = LevelSpec(o.q.empty() ? levels_from_rule(o.p, o.q_rule) : o.q);
    } catch (const DataError& e) {
      throw UsageError(e.what());
    }
    cfg.model = ResponseModel::unit(cfg.spec);
    cfg.model.sigma = o.sigma;
    report = run_experiment(cfg);
  }

  std::filesystem::create_directories(o.out);
  const auto dir = std::filesystem::path(o.out);
  Json j = to_json(report);
  j["config"]["input"] = external ? Json(o.in.input) : Json(nullptr);
  j["config"]["threads"] = o.threads;
  open_output((dir / "report.json").string()) << j.dump(2) << '\n';
  {
    auto csv = open_output((dir / "metrics.csv").string());
    write_tidy_csv(csv, report);
  }
  for (const auto& m : report.methods) {
    std::printf("%s: nonsingular=%.3f mse=%.6g", to_string(m.method), m.nonsingular_proportion,
                m.mse);
    if (m.wspe_analytic) std::printf(" wspe_analytic=%.6g", *m.wspe_analytic);
    if (m.wspe_empirical) std::printf(" wspe_empirical=%.6g", *m.wspe_empirical);
    std::printf(" mean_f=%.6g\n", m.mean_f);
  }
  if (report.all_singular()) {
    std::cerr << "error: every repetition of every method gave a singular fit\n";
    return kExitSingular;
  }
  return kExitOk;
}

// Reads flat key = value files as options of the simulate subcommand.
class SimulateConfig : public CLI::ConfigTOML {
 public:
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    auto items = CLI::ConfigTOML::from_config(input);
    for (auto& item : items) {
      if (item.parents.empty()) item.parents = {"simulate"};
    }
    return items;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Balanced subsampling for data with categorical covariates"};
  app.require_subcommand(1);

  SubsampleOptions sub;
  auto* sc = app.add_subcommand("subsample", "Select a subsample and write its row indices");
  add_input_options(sc, sub.in, true);
  sc->add_option("--n", sub.n, "Subsample size")->required();
  sc->add_option("--method", sub.method, "balanced or uniform");
  sc->add_option("--seed", sub.seed, "Random seed");
  sc->add_option("--output", sub.output, "Indices file (default: stdout)");
  sc->add_option("--subsample-out", sub.subsample_out, "Write the selected rows as CSV");
  sc->add_option("--report", sub.report, "Write a JSON report");
  sc->add_option("--tie-rule", sub.tie_rule, "lowest-index or seeded-random");
  sc->add_option("--threads", sub.threads, "Worker threads (0: all cores)");
  sc->add_flag("--verbose", sub.verbose, "Trace every greedy step to stderr as JSON lines");

  InspectOptions ins;
  auto* ic = app.add_subcommand("inspect", "Balance and information-matrix diagnostics");
  add_input_options(ic, ins.in, true);
  ic->add_option("--indices", ins.indices, "Indices file, one 0-based row per line");
  ic->add_option("--output", ins.output, "Write the JSON here instead of stdout");

  SimulateOptions sim;
  auto* mc = app.add_subcommand("simulate", "Repeated-response simulation");
  app.set_config("--config", "", "Flat key = value file of simulate options");
  app.config_formatter(std::make_shared<SimulateConfig>());
  mc->fallthrough();
  app.allow_config_extras(CLI::config_extras_mode::error);
  add_input_options(mc, sim.in, false);
  mc->add_option("--case", sim.data_case, "Covariate structure 1, 2 or 3");
  mc->add_option("--N", sim.N, "Full data size");
  mc->add_option("--q", sim.q, "Comma-separated level counts")->delimiter(',');
  mc->add_option("--p", sim.p, "Number of covariates, levels from --q-rule");
  mc->add_option("--q-rule", sim.q_rule, "increment (q_j = j + 1) or constant:K");
  mc->add_option("--n", sim.n, "Subsample size")->required();
  mc->add_option("--reps", sim.reps, "Repetitions");
  mc->add_option("--methods", sim.methods, "Comma-separated: balanced,uniform")->delimiter(',');
  mc->add_option("--seed", sim.seed, "Master seed");
  mc->add_option("--wspe", sim.wspe, "empirical, analytic or both");
  mc->add_option("--sigma", sim.sigma, "Noise standard deviation");
  mc->add_option("--out", sim.out, "Output directory")->required();
  mc->add_option("--tie-rule", sim.tie_rule, "lowest-index or seeded-random");
  mc->add_option("--threads", sim.threads, "Worker threads (0: all cores)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*sc) return cmd_subsample(sub);
    if (*ic) return cmd_inspect(ins);
    return cmd_simulate(sim);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
}
