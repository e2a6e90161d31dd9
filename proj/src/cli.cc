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

#include "odyssey/cli.h"

#include <cstdlib>
#include <filesystem>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <fmt/ranges.h>
#include <openssl/evp.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "odyssey/estimator.h"
#include "odyssey/io.h"
#include "odyssey/planner.h"
#include "odyssey/restorer.h"
#include "odyssey/simulator.h"

namespace fs = std::filesystem;

namespace odyssey {

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

namespace {

void configure_logging() {
  static bool done = false;
  if (done) return;
  done = true;
  auto logger = spdlog::stderr_color_mt("odyssey");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* level = std::getenv("ODYSSEY_LOG")) {
    spdlog::set_level(spdlog::level::from_str(level));
  }
}

struct Options {
  std::string profile;
  std::string scenario;
  std::string state;
  std::string plan;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string policy;
  std::optional<int> dp_min, dp_max, pp_min, pp_max, lookahead;
  std::optional<double> residence;
};

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw InputError(fmt::format("{} is required", flag));
}

void require_valid(const std::vector<std::string>& problems, const std::string& what) {
  if (problems.empty()) return;
  std::string msg = what + " is invalid:";
  for (const auto& p : problems) msg += "\n  " + p;
  throw InputError(msg);
}

// The running plan was laid out before the faults, so it is checked against
// the cluster as it was then.
std::vector<std::string> validate_current_plan(const ClusterState& state,
                                               const Profile& profile) {
  ClusterState before = state;
  before.failed_nodes.clear();
  return validate_plan(state.current_plan, before, profile);
}

ClusterState load_state(const std::string& path) {
  ClusterState s = state_from_json(read_json_file(path));
  require_valid(validate_state(s), path);
  return s;
}

Scenario load_scenario(const std::string& path, const Profile& profile) {
  Scenario s = scenario_from_json(read_json_file(path));
  require_valid(validate_scenario(s, profile), path);
  return s;
}

void print_layout(std::ostream& out, const ExecutionPlan& plan) {
  fmt::print(out, "  {:<9} {:<7} {:<40} {}\n", "pipeline", "stages", "layers",
             "micro-batches");
  for (int p = 0; p < plan.parallel.dp_degree; ++p) {
    std::string layers;
    for (const LayerRange& r : plan.layer_assignment[p]) {
      layers += fmt::format("[{},{}) ", r.begin, r.end);
    }
    fmt::print(out, "  {:<9} {:<7} {:<40} {}\n", p, plan.parallel.stage_counts[p], layers,
               plan.batch_assignment[p]);
  }
  if (plan.policy == Policy::kDataRerouting) {
    fmt::print(out, "  failed nodes per stage: [{}]\n",
               fmt::join(plan.failure_distribution, ", "));
  }
}

int cmd_plan(const Options& o, std::ostream& out) {
  require(o.profile, "--profile");
  require(o.state, "--state");
  const Profile profile = load_profile(o.profile);
  const ClusterState state = load_state(o.state);
  require_valid(validate_current_plan(state, profile), "current plan");

  SearchOverrides overrides;
  if (o.dp_min || o.dp_max) {
    overrides.dp_range = IntRange{o.dp_min.value_or(1), o.dp_max.value_or(state.total_nodes)};
  }
  if (o.pp_min || o.pp_max) {
    overrides.pp_range = IntRange{o.pp_min.value_or(1), o.pp_max.value_or(profile.num_layers)};
  }
  overrides.max_faults_lookahead = o.lookahead;
  overrides.expected_residence_seconds = o.residence;
  SearchConfig cfg = resolve_search_config(overrides, state.current_plan, 3600.0);
  SelectionMode mode = SelectionMode::kAdaptive;
  if (!o.policy.empty()) {
    switch (parse_sim_policy(o.policy)) {
      case SimPolicy::kAdaptive:
        break;
      case SimPolicy::kAlwaysReroute:
        mode = SelectionMode::kPreferRerouting;
        break;
      case SimPolicy::kAlwaysReconfigure:
        mode = SelectionMode::kAlwaysReconfigure;
        break;
    }
  }
  require_valid(validate_search_config(cfg), "search configuration");

  const PlanDecision d = decide_plan(state, profile, cfg, mode);
  if (d.retained) {
    fmt::print(out, "no fault; current plan retained\n");
    fmt::print(out, "plan: {}\n", plan_summary(d.chosen));
    print_layout(out, d.chosen);
    fmt::print(out, "estimated step time: {:.6f} s\n", d.estimated_step_seconds);
    fmt::print(out, "objective: {:.6f} samples/s\n", d.objective_value);
    return kExitOk;
  }
  fmt::print(out, "chosen policy: {}{}\n", policy_name(d.chosen.policy),
             d.forced ? " (forced: rerouting infeasible)" : "");
  fmt::print(out, "plan: {}\n", plan_summary(d.chosen));
  print_layout(out, d.chosen);
  fmt::print(out, "estimated step time: {:.6f} s\n", d.estimated_step_seconds);
  fmt::print(out, "transition time: {:.6f} s\n", d.estimated_transition_seconds);
  if (d.chosen.policy == Policy::kDynamicParallelism) {
    fmt::print(out, "weight transfer: {} layers, {:.6f} s\n", d.transfer.total_cost_layers,
               d.transfer.transfer_seconds);
  }
  fmt::print(out, "expected residence: {:.3f} s\n", cfg.expected_residence_seconds);
  fmt::print(out, "objective: {:.6f} samples/s\n", d.objective_value);
  fmt::print(out, "rejected alternatives:\n");
  if (d.rejected_alternatives.empty()) fmt::print(out, "  (none)\n");
  for (const auto& r : d.rejected_alternatives) {
    fmt::print(out, "  {} objective {:.6f} samples/s\n", r.summary, r.objective);
  }
  return kExitOk;
}

int cmd_estimate(const Options& o, std::ostream& out) {
  require(o.profile, "--profile");
  require(o.plan, "--plan");
  const Profile profile = load_profile(o.profile);
  const ExecutionPlan plan = plan_from_json(read_json_file(o.plan));

  ClusterState state;
  state.total_nodes = std::max(1, plan.num_slots());
  state.global_batch_size = std::max(1, plan.total_micro_batches());
  state.micro_batch_size = 1;
  state.current_plan = plan;
  const auto violations = validate_plan(plan, state, profile);
  fmt::print(out, "plan: {}\n", plan_summary(plan));
  if (!violations.empty()) {
    fmt::print(out, "plan is invalid:\n");
    for (const auto& v : violations) fmt::print(out, "  {}\n", v);
    return kExitInfeasible;
  }

  Seconds pipeline_time = 0.0;
  if (plan.policy == Policy::kDataRerouting) {
    pipeline_time = step_time_rerouting(plan, profile);
    fmt::print(out, "rerouted pipeline time: {:.6f} s\n", pipeline_time);
  } else {
    for (int p = 0; p < plan.parallel.dp_degree; ++p) {
      const Seconds t = pipeline_makespan(plan, p, profile);
      pipeline_time = std::max(pipeline_time, t);
      fmt::print(out, "pipeline {}: makespan {:.6f} s ({} micro-batches)\n", p, t,
                 plan.batch_assignment[p]);
    }
  }
  const ConflictGraph g = build_conflict_graph(plan, profile.num_layers);
  const CommSchedule rounds = color_comm_rounds(g);
  const Seconds sync = sync_time(plan, profile);
  fmt::print(out, "sync: {} rounds, {:.6f} s\n", plan.parallel.dp_degree > 1 ? rounds.num_rounds : 0,
             sync);
  fmt::print(out, "step time: {:.6f} s\n", plan_step_time(plan, profile));

  fmt::print(out, "peak memory (limit {} bytes):\n", profile.device_memory_limit);
  bool exceeded = false;
  for (int p = 0; p < plan.parallel.dp_degree; ++p) {
    const auto& stages = plan.layer_assignment[p];
    const int n = static_cast<int>(stages.size());
    for (int s = 0; s < n; ++s) {
      const Bytes peak = peak_memory(s, stages[s].size(), n, profile);
      const bool over = peak > profile.device_memory_limit;
      exceeded = exceeded || over;
      fmt::print(out, "  pipeline {} stage {}: {} layers, {} bytes{}\n", p, s, stages[s].size(),
                 peak, over ? "  EXCEEDS LIMIT" : "");
    }
  }
  return exceeded ? kExitInfeasible : kExitOk;
}

int cmd_validate(const Options& o, std::ostream& out) {
  require(o.profile, "--profile");
  const Profile profile = load_profile(o.profile);
  fmt::print(out, "profile ok\n");
  std::optional<ClusterState> state;
  if (!o.state.empty()) {
    state = load_state(o.state);
    fmt::print(out, "state ok\n");
  }
  if (!o.scenario.empty()) {
    load_scenario(o.scenario, profile);
    fmt::print(out, "scenario ok\n");
  }
  std::vector<std::pair<std::string, std::vector<std::string>>> checks;
  if (state) checks.emplace_back("current plan", validate_current_plan(*state, profile));
  if (!o.plan.empty()) {
    const ExecutionPlan plan = plan_from_json(read_json_file(o.plan));
    ClusterState s = state.value_or(ClusterState{});
    if (!state) {
      s.total_nodes = std::max(1, plan.num_slots());
      s.global_batch_size = std::max(1, plan.total_micro_batches());
      s.micro_batch_size = 1;
      s.current_plan = plan;
    }
    checks.emplace_back("plan", validate_plan(plan, s, profile));
  }
  int code = kExitOk;
  for (const auto& [name, problems] : checks) {
    if (problems.empty()) {
      fmt::print(out, "{} ok\n", name);
      continue;
    }
    code = kExitInfeasible;
    fmt::print(out, "{} has {} violation(s):\n", name, problems.size());
    for (const auto& p : problems) fmt::print(out, "  {}\n", p);
  }
  return code;
}

Json ratio_json(const RatioStats& r) {
  return Json{{"min", r.min}, {"mean", r.mean}, {"max", r.max}, {"per_seed", r.per_seed}};
}

int cmd_simulate(const Options& o, const std::vector<std::string>& args, std::ostream& out) {
  require(o.profile, "--profile");
  require(o.scenario, "--scenario");
  require(o.out, "--out");
  const Profile profile = load_profile(o.profile);
  Scenario scenario = load_scenario(o.scenario, profile);

  std::vector<std::uint64_t> seeds = scenario.seeds.empty()
                                         ? std::vector<std::uint64_t>{scenario.seed}
                                         : scenario.seeds;
  if (o.seed) seeds = {*o.seed};

  const fs::path out_dir = fs::absolute(o.out).lexically_normal();
  fs::create_directories(out_dir);

  std::vector<SimPolicy> policies(std::begin(kAllSimPolicies), std::end(kAllSimPolicies));
  if (!o.policy.empty()) policies = {parse_sim_policy(o.policy)};

  Json summary{{"tool_version", kToolVersion}, {"scenario", to_json(scenario)}, {"seeds", seeds}};
  Json outputs = Json::object();
  auto emit = [&](const std::string& name, const std::string& content) {
    write_text_file_atomic(out_dir / name, content);
    outputs[name] = sha256_hex(content);
  };

  Json per_policy = Json::object();
  if (policies.size() == 1) {
    std::vector<double> averages;
    for (std::uint64_t seed : seeds) {
      Scenario s = scenario;
      s.policy = policies.front();
      s.seed = seed;
      const SimTrace trace = run_simulation(s, profile);
      averages.push_back(trace.average_throughput);
      emit(fmt::format("trace_{}_seed{}.csv", sim_policy_name(s.policy), seed),
           trace_csv(trace));
    }
    double mean = 0.0;
    for (double a : averages) mean += a / averages.size();
    per_policy[sim_policy_name(policies.front())] =
        Json{{"mean_throughput", mean}, {"per_seed", averages}};
    summary["policies"] = per_policy;
    fmt::print(out, "{:<18} mean throughput {:.6f} samples/s\n",
               sim_policy_name(policies.front()), mean);
  } else {
    const PolicyComparison cmp = compare_policies(scenario, profile, seeds);
    for (std::size_t p = 0; p < std::size(kAllSimPolicies); ++p) {
      std::vector<double> averages;
      for (std::size_t i = 0; i < seeds.size(); ++i) {
        const SimTrace& trace = cmp.traces[p][i];
        averages.push_back(trace.average_throughput);
        emit(fmt::format("trace_{}_seed{}.csv", sim_policy_name(kAllSimPolicies[p]), seeds[i]),
             trace_csv(trace));
      }
      per_policy[sim_policy_name(kAllSimPolicies[p])] =
          Json{{"mean_throughput", cmp.mean_throughput[p]}, {"per_seed", averages}};
    }
    summary["policies"] = per_policy;
    summary["ratios"] = Json{
        {"Adaptive/AlwaysReroute", ratio_json(cmp.adaptive_over_reroute)},
        {"Adaptive/AlwaysReconfigure", ratio_json(cmp.adaptive_over_reconfigure)},
        {"AlwaysReroute/AlwaysReconfigure", ratio_json(cmp.reroute_over_reconfigure)}};

    for (std::size_t p = 0; p < std::size(kAllSimPolicies); ++p) {
      fmt::print(out, "{:<18} mean throughput {:.6f} samples/s\n",
                 sim_policy_name(kAllSimPolicies[p]), cmp.mean_throughput[p]);
    }
    fmt::print(out, "{:<32} {:>9} {:>9} {:>9}\n", "ratio", "min", "mean", "max");
    auto row = [&out](const char* name, const RatioStats& r) {
      fmt::print(out, "{:<32} {:>9.4f} {:>9.4f} {:>9.4f}\n", name, r.min, r.mean, r.max);
    };
    row("Adaptive/AlwaysReroute", cmp.adaptive_over_reroute);
    row("Adaptive/AlwaysReconfigure", cmp.adaptive_over_reconfigure);
    row("AlwaysReroute/AlwaysReconfigure", cmp.reroute_over_reconfigure);
  }
  emit("summary.json", summary.dump(2) + "\n");

  const std::string profile_bytes = read_text_file(o.profile);
  const std::string scenario_bytes = read_text_file(o.scenario);
  Json manifest{
      {"tool", "odyssey"},
      {"tool_version", kToolVersion},
      {"command", args},
      {"inputs",
       {{"profile",
         {{"path", fs::absolute(o.profile).lexically_normal().string()},
          {"sha256", sha256_hex(profile_bytes)}}},
        {"scenario",
         {{"path", fs::absolute(o.scenario).lexically_normal().string()},
          {"sha256", sha256_hex(scenario_bytes)}}}}},
      {"inputs_sha256", sha256_hex(profile_bytes + scenario_bytes)},
      {"seeds", seeds},
      {"policies", [&] {
         Json names = Json::array();
         for (SimPolicy p : policies) names.push_back(sim_policy_name(p));
         return names;
       }()},
      {"output_dir", out_dir.string()},
      {"outputs", outputs}};
  write_text_file_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
  fmt::print(out, "wrote {} files to {}\n", outputs.size() + 1, out_dir.string());
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  configure_logging();
  CLI::App app{"Fault-tolerance planner and failure simulator for pipeline-parallel training",
               "odyssey"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  Options o;
  auto add_common = [&o](CLI::App* cmd) {
    cmd->add_option("--profile", o.profile, "profile JSON");
  };
  auto* plan = app.add_subcommand("plan", "choose a recovery plan for a cluster state");
  add_common(plan);
  plan->add_option("--state", o.state, "cluster state JSON");
  plan->add_option("--policy", o.policy, "Adaptive | AlwaysReroute | AlwaysReconfigure");
  plan->add_option("--dp-min", o.dp_min);
  plan->add_option("--dp-max", o.dp_max);
  plan->add_option("--pp-min", o.pp_min);
  plan->add_option("--pp-max", o.pp_max);
  plan->add_option("--lookahead", o.lookahead, "idle-node lookahead of the search");
  plan->add_option("--residence", o.residence, "expected seconds until the next fault");

  auto* simulate = app.add_subcommand("simulate", "simulate training under random failures");
  add_common(simulate);
  simulate->add_option("--scenario", o.scenario, "scenario JSON");
  simulate->add_option("--out", o.out, "output directory");
  simulate->add_option("--seed", o.seed, "run a single seed");
  simulate->add_option("--policy", o.policy, "run a single policy");

  auto* estimate = app.add_subcommand("estimate", "estimate step time and memory of a plan");
  add_common(estimate);
  estimate->add_option("--plan", o.plan, "execution plan JSON");

  auto* validate = app.add_subcommand("validate", "check input files");
  add_common(validate);
  validate->add_option("--plan", o.plan);
  validate->add_option("--state", o.state);
  validate->add_option("--scenario", o.scenario);

  std::vector<std::string> argv_store{"odyssey"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kExitInputError;
  }

  try {
    if (*plan) return cmd_plan(o, out);
    if (*simulate) return cmd_simulate(o, args, out);
    if (*estimate) return cmd_estimate(o, out);
    if (*validate) return cmd_validate(o, out);
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const InfeasibleError& e) {
    err << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  }
  return kExitInputError;
}

}  // namespace odyssey
