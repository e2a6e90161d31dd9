/*
Copyright 2026 The Odyssey Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#include <filesystem>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <gtest/gtest.h>

#include "odyssey/cli.h"
#include "odyssey/estimator.h"
#include "odyssey/io.h"

namespace odyssey {
namespace {

namespace fs = std::filesystem;

const fs::path kData(ODYSSEY_DATA_DIR);

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string data(const char* name) { return (kData / name).string(); }

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path(ODYSSEY_TEST_TMP) / "cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

TEST(Cli, ExitCodesForBadInvocations) {
  EXPECT_EQ(run({}).code, kExitInputError);
  EXPECT_EQ(run({"frobnicate"}).code, kExitInputError);
  EXPECT_EQ(run({"plan", "--profile", data("profile_small.json")}).code, kExitInputError);
  EXPECT_EQ(run({"plan", "--profile", data("missing.json"), "--state", data("state_fault.json")})
                .code,
            kExitInputError);
  const fs::path dir = scratch("badkey");
  Json j = read_json_file(kData / "profile_small.json");
  j["surprise"] = 1;
  write_text_file_atomic(dir / "p.json", j.dump());
  const Result r = run({"validate", "--profile", (dir / "p.json").string()});
  EXPECT_EQ(r.code, kExitInputError);
  EXPECT_TRUE(contains(r.err, "surprise"));
  EXPECT_EQ(run({"--version"}).code, kExitOk);
}

TEST(Cli, PlanAfterOneFaultPicksTwoPipelines) {
  const Result r =
      run({"plan", "--profile", data("profile_reshape.json"), "--state", data("state_fault.json")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(contains(r.out, "chosen policy: DynamicParallelism")) << r.out;
  EXPECT_TRUE(contains(r.out, "plan: DynamicParallelism dp=2 ")) << r.out;
  EXPECT_TRUE(contains(r.out, "estimated step time:"));
  EXPECT_TRUE(contains(r.out, "transition time:"));
  EXPECT_TRUE(contains(r.out, "objective:"));
  EXPECT_TRUE(contains(r.out, "rejected alternatives:\n  DataRerouting")) << r.out;

  const Result four = run({"plan", "--profile", data("profile_reshape.json"), "--state",
                           data("state_fault.json"), "--pp-min", "2", "--pp-max", "4"});
  ASSERT_EQ(four.code, kExitOk) << four.err;
  EXPECT_TRUE(contains(four.out, "dp=2 stages=[4,4]")) << four.out;
}

TEST(Cli, PlanWithoutFaultRetainsPlan) {
  const Result r = run(
      {"plan", "--profile", data("profile_small.json"), "--state", data("state_healthy.json")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(contains(r.out, "no fault; current plan retained"));
}

TEST(Cli, PlanWithTinyMemoryIsInfeasible) {
  const fs::path dir = scratch("tiny");
  Json j = read_json_file(kData / "profile_small.json");
  j["device_memory_limit"] = 1 << 20;
  write_text_file_atomic(dir / "p.json", j.dump());
  const Result r =
      run({"plan", "--profile", (dir / "p.json").string(), "--state", data("state_fault.json")});
  EXPECT_EQ(r.code, kExitInfeasible);
  EXPECT_TRUE(contains(r.err, "bytes > limit 1048576 bytes")) << r.err;
}

TEST(Cli, EstimateSymmetricMatchesClosedForm) {
  const Result r = run(
      {"estimate", "--profile", data("profile_small.json"), "--plan", data("plan_symmetric.json")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  // 3 stages of 3 layers, 6 micro-batches: (3 + 6 - 1) * (3 + 6) = 72
  EXPECT_TRUE(contains(r.out, "pipeline 0: makespan 72.000000 s")) << r.out;
  EXPECT_TRUE(contains(r.out, "sync: 3 rounds, 1.500000 s"));
  EXPECT_TRUE(contains(r.out, "step time: 73.500000 s"));
}

TEST(Cli, EstimateAsymmetricReportsEveryPipeline) {
  const Profile p = load_profile(kData / "profile_small.json");
  const ExecutionPlan plan = plan_from_json(read_json_file(kData / "plan_asymmetric.json"));
  const Result r = run(
      {"estimate", "--profile", data("profile_small.json"), "--plan", data("plan_asymmetric.json")});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  for (int k = 0; k < 3; ++k) {
    EXPECT_TRUE(contains(r.out, fmt::format("pipeline {}: makespan {:.6f} s", k,
                                            pipeline_makespan(plan, k, p))))
        << r.out;
  }
  const auto rounds = color_comm_rounds(build_conflict_graph(plan, p.num_layers)).num_rounds;
  EXPECT_TRUE(contains(r.out, fmt::format("sync: {} rounds", rounds))) << r.out;
}

TEST(Cli, EstimateFlagsOutOfMemoryStage) {
  const Result r =
      run({"estimate", "--profile", data("profile_small.json"), "--plan", data("plan_oom.json")});
  EXPECT_EQ(r.code, kExitInfeasible);
  EXPECT_TRUE(contains(r.out, "pipeline 0 stage 0: 5 layers, 16106127360 bytes  EXCEEDS LIMIT"))
      << r.out;
}

fs::path write_scenario(const fs::path& dir, double rate, std::vector<int> seeds) {
  Json j = read_json_file(kData / "scenario.json");
  j["per_node_failure_rate"] = rate;
  j["seeds"] = seeds;
  j["duration_seconds"] = 4 * 3600.0;
  write_text_file_atomic(dir / "scenario.json", j.dump(2));
  return dir / "scenario.json";
}

TEST(Cli, SimulateWithoutFaultsHasUnitRatios) {
  const fs::path dir = scratch("rate0");
  const fs::path scenario = write_scenario(dir, 0.0, {1});
  const Result r = run({"simulate", "--profile", data("profile.json"), "--scenario",
                        scenario.string(), "--out", (dir / "out").string()});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const Json summary = read_json_file(dir / "out" / "summary.json");
  for (const auto& [name, ratio] : summary["ratios"].items()) {
    EXPECT_EQ(ratio["min"], 1.0) << name;
    EXPECT_EQ(ratio["max"], 1.0) << name;
  }
  const std::string csv = read_text_file(dir / "out" / "trace_Adaptive_seed1.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Cli, SimulateIsByteReproducible) {
  const fs::path dir = scratch("repro");
  const fs::path scenario = write_scenario(dir, 0.1, {1, 2, 3});
  const std::vector<std::string> args{"simulate", "--profile", data("profile.json"), "--scenario",
                                      scenario.string(), "--out", (dir / "out").string()};
  const Result first = run(args);
  ASSERT_EQ(first.code, kExitOk) << first.err;
  const Json summary = read_json_file(dir / "out" / "summary.json");
  const Json ratio = summary["ratios"]["Adaptive/AlwaysReroute"];
  EXPECT_EQ(ratio["per_seed"].size(), 3u);
  EXPECT_LE(ratio["min"].get<double>(), ratio["mean"].get<double>());
  EXPECT_LE(ratio["mean"].get<double>(), ratio["max"].get<double>());
  EXPECT_TRUE(contains(first.out, "Adaptive/AlwaysReroute"));

  std::map<std::string, std::string> before;
  for (const auto& e : fs::directory_iterator(dir / "out")) {
    before[e.path().filename().string()] = read_text_file(e.path());
  }
  EXPECT_EQ(before.size(), 3u * 3u + 2u);
  const Json manifest = read_json_file(dir / "out" / "manifest.json");
  EXPECT_EQ(manifest["outputs"]["summary.json"], sha256_hex(before["summary.json"]));
  EXPECT_EQ(manifest["inputs"]["scenario"]["sha256"], sha256_hex(read_text_file(scenario)));

  ASSERT_EQ(run(args).code, kExitOk);
  for (const auto& [name, bytes] : before) {
    EXPECT_EQ(read_text_file(dir / "out" / name), bytes) << name;
  }
}

TEST(Cli, SimulateSingleSeedAndPolicy) {
  const fs::path dir = scratch("single");
  const fs::path scenario = write_scenario(dir, 0.1, {1, 2});
  const Result r = run({"simulate", "--profile", data("profile.json"), "--scenario",
                        scenario.string(), "--out", (dir / "out").string(), "--seed", "7",
                        "--policy", "AlwaysReroute"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_TRUE(fs::exists(dir / "out" / "trace_AlwaysReroute_seed7.csv"));
  EXPECT_FALSE(fs::exists(dir / "out" / "trace_Adaptive_seed7.csv"));
}

TEST(Cli, ValidateReportsPlanViolations) {
  EXPECT_EQ(run({"validate", "--profile", data("profile_small.json"), "--state",
                 data("state_fault.json"), "--plan", data("plan_symmetric.json")})
                .code,
            kExitOk);
  const Result r = run({"validate", "--profile", data("profile.json"), "--plan",
                        data("plan_symmetric.json")});
  EXPECT_EQ(r.code, kExitInfeasible);
  EXPECT_TRUE(contains(r.out, "plan has")) << r.out;
}

TEST(Sha256, KnownDigest) {
  EXPECT_EQ(sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

}  // namespace
}  // namespace odyssey
