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
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"

namespace balsub {
namespace {

namespace fs = std::filesystem;

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("balsub_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name)) << text;
    return path(name);
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  CliResult run(const std::string& args) const {
    const std::string out = path("stdout.txt"), err = path("stderr.txt");
    const std::string cmd = std::string(BALSUB_CLI) + " " + args + " > " + out + " 2> " + err;
    const int status = std::system(cmd.c_str());
    return CliResult{WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  fs::path dir_;
};

std::vector<std::size_t> parse_indices(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::size_t> out;
  for (std::size_t i; in >> i;) out.push_back(i);
  return out;
}

const char* kExample1 = "x\n1\n1\n2\n2\n3\n3\n4\n4\n5\n5\n";

std::string oa9_csv() {
  std::string text = "a,b,c\n";
  for (const auto& r : testing::oa9_rows()) {
    text += std::to_string(r[0]) + "," + std::to_string(r[1]) + "," + std::to_string(r[2]) + "\n";
  }
  return text;
}

TEST_F(Cli, SubsampleExampleOne) {
  const std::string in = write("ex1.csv", kExample1);
  const CliResult r = run("subsample --input " + in + " --n 5 --report " + path("r.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto idx = parse_indices(r.out);
  ASSERT_EQ(idx.size(), 5u);
  const Dataset d = ingest_csv(in);
  const Subsample s(d, idx);
  EXPECT_EQ(f_direct(balance_stats(s, d.spec())), 0.0);
  const Json report = Json::parse(slurp(path("r.json")));
  EXPECT_EQ(report["f"], 0.0);
  EXPECT_EQ(report["oa"], true);
  EXPECT_EQ(report["N"], 10);
}

TEST_F(Cli, SubsampleTooLarge) {
  const std::string in = write("ex1.csv", kExample1);
  const CliResult r = run("subsample --input " + in + " --n 11");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("11"), std::string::npos);
  EXPECT_NE(r.err.find("10"), std::string::npos);
}

TEST_F(Cli, UniformIsReproducible) {
  const Dataset d = gen_case1(200, LevelSpec({3, 4}), 1);
  {
    std::ofstream out(path("d.csv"));
    write_csv(out, d);
  }
  const std::string args = "subsample --input " + path("d.csv") + " --n 20 --method uniform --seed 7";
  const CliResult a = run(args);
  const CliResult b = run(args);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(parse_indices(a.out).size(), 20u);
}

TEST_F(Cli, SubsampleWritesRows) {
  const std::string in = write("d.csv", "id,color,y\n1,red,1.5\n2,blue,2\n3,red,3\n4,green,4\n");
  const CliResult r = run("subsample --input " + in +
                    " --categorical color --response y --n 3 --subsample-out " + path("s.csv") +
                    " --output " + path("idx.txt") + " --verbose");
  ASSERT_EQ(r.code, 0) << r.err;
  const Dataset s = parse_csv(slurp(path("s.csv")), CsvSchema{{"color"}, "y"});
  EXPECT_EQ(s.size(), 3u);
  EXPECT_EQ(s.spec().q, std::vector<std::uint32_t>({3}));
  EXPECT_EQ(parse_indices(slurp(path("idx.txt"))).size(), 3u);
  // one JSON trace line per step
  std::istringstream trace(r.err);
  std::size_t lines = 0;
  for (std::string line; std::getline(trace, line);) {
    EXPECT_TRUE(Json::accept(line));
    ++lines;
  }
  EXPECT_EQ(lines, 3u);
}

TEST_F(Cli, InspectOrthogonalArray) {
  const std::string in = write("oa.csv", oa9_csv());
  const CliResult r = run("inspect --input " + in);
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = Json::parse(r.out);
  EXPECT_EQ(j["f"], 0.0);
  EXPECT_EQ(j["oa"], true);
  EXPECT_NEAR(j["det_ratio"].get<double>(), 1.0, 1e-9);
  EXPECT_NEAR(j["leverage_ratio"].get<double>(), 1.0, 1e-9);
}

TEST_F(Cli, InspectSingularSubsample) {
  const std::string in = write("oa.csv", oa9_csv());
  // rows 0..2 all have a = 0, so levels 1 and 2 of a are unobserved
  const std::string idx = write("idx.txt", "0\n1\n2\n");
  const CliResult r = run("inspect --input " + in + " --indices " + idx);
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = Json::parse(r.out);
  EXPECT_EQ(j["singular"], true);
  EXPECT_TRUE(j["max_leverage"].is_null());
}

TEST_F(Cli, InspectEmptyIndices) {
  const std::string in = write("oa.csv", oa9_csv());
  const CliResult r = run("inspect --input " + in + " --indices " + write("idx.txt", ""));
  EXPECT_EQ(r.code, 2);
}

TEST_F(Cli, SimulateCase2) {
  const CliResult r = run("simulate --case 2 --N 3000 --q 2,3,4 --n 40 --reps 5 --out " + path("sim"));
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = Json::parse(slurp(path("sim/report.json")));
  EXPECT_EQ(j["methods"][0]["method"], "balanced");
  EXPECT_EQ(j["methods"][0]["nonsingular_proportion"], 1.0);
  std::istringstream csv(slurp(path("sim/metrics.csv")));
  std::size_t lines = 0;
  for (std::string line; std::getline(csv, line);) ++lines;
  EXPECT_EQ(lines, 11u);
  EXPECT_NE(r.out.find("balanced: nonsingular=1.000"), std::string::npos);
}

TEST_F(Cli, SimulateNoiseless) {
  const CliResult r = run("simulate --case 1 --N 1000 --p 3 --n 30 --reps 3 --sigma 0 --methods balanced"
                    " --out " + path("sim"));
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = Json::parse(slurp(path("sim/report.json")));
  EXPECT_NEAR(j["methods"][0]["mse"].get<double>(), 0.0, 1e-20);
  EXPECT_EQ(j["config"]["q"], Json({2, 3, 4}));
}

TEST_F(Cli, SimulateConfigFile) {
  const std::string cfg = write("sim.ini", "case = 3\nN = 2000\nq = 3,3\nn = 20\nreps = 2\n");
  const CliResult r = run("simulate --config " + cfg + " --out " + path("sim"));
  ASSERT_EQ(r.code, 0) << r.err;
  const Json j = Json::parse(slurp(path("sim/report.json")));
  EXPECT_EQ(j["config"]["case"], 3);
  EXPECT_EQ(j["config"]["N"], 2000);
  EXPECT_EQ(j["config"]["reps"], 2);

  // command-line flags override the file
  ASSERT_EQ(run("simulate --config " + cfg + " --reps 3 --out " + path("sim")).code, 0);
  EXPECT_EQ(Json::parse(slurp(path("sim/report.json")))["config"]["reps"], 3);

  const std::string bad = write("bad.ini", "n = 20\nbogus = 1\n");
  EXPECT_EQ(run("simulate --config " + bad + " --case 1 --q 2 --out " + path("sim")).code, 1);
}

TEST_F(Cli, SimulateAllSingular) {
  const CliResult r = run("simulate --case 1 --N 100 --q 3,3 --n 2 --reps 2 --out " + path("sim"));
  EXPECT_EQ(r.code, 3);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("simulate --case 2 --N 100 --q 2,3 --n 10 --reps 0 --out " + path("x")).code, 1);
  EXPECT_EQ(run("subsample --bogus").code, 1);
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("subsample --input " + path("missing.csv") + " --n 3").code, 2);
}

}  // namespace
}  // namespace balsub
