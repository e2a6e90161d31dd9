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

#ifndef ODYSSEY_SIMULATOR_H_
#define ODYSSEY_SIMULATOR_H_

#include <cstdint>
#include <string>
#include <vector>

#include "odyssey/domain.h"
#include "odyssey/planner.h"

namespace odyssey {

enum class SimPolicy { kAdaptive, kAlwaysReroute, kAlwaysReconfigure };

const char* sim_policy_name(SimPolicy policy);
SimPolicy parse_sim_policy(const std::string& name);
inline constexpr SimPolicy kAllSimPolicies[] = {
    SimPolicy::kAdaptive, SimPolicy::kAlwaysReroute, SimPolicy::kAlwaysReconfigure};

struct Scenario {
  Seconds duration_seconds = 0.0;
  int n_nodes_initial = 0;
  double per_node_failure_rate = 0.0;  // failures per node per hour
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;  // comparison seeds; empty means {seed}
  int global_batch_size = 0;
  int micro_batch_size = 0;
  SimPolicy policy = SimPolicy::kAdaptive;
  int initial_dp = 0;  // symmetric starting plan
  int initial_pp = 0;
  SearchOverrides search;

  bool operator==(const Scenario&) const = default;
};

std::vector<std::string> validate_scenario(const Scenario& scenario, const Profile& profile);

/// Symmetric plan of initial_dp pipelines with initial_pp stages each.
ExecutionPlan initial_plan(const Scenario& scenario, const Profile& profile);

/// Per-node failure times in seconds, drawn in node order from one
/// mt19937_64 stream; +inf when the rate is zero.
std::vector<Seconds> draw_failure_times(std::uint64_t seed, int n_nodes,
                                        double per_node_failure_rate);

enum class EventKind { kFault, kPlanSwitch, kIntervalSummary };
const char* event_kind_name(EventKind kind);

struct SimEvent {
  Seconds time = 0.0;
  EventKind kind = EventKind::kFault;
  std::string payload;
};

/// Constant-throughput stretch of simulated time.
struct SimInterval {
  Seconds start = 0.0;
  Seconds end = 0.0;
  double throughput = 0.0;  // samples/second
  int active_nodes = 0;
  std::string label;  // plan policy, "transition", or "initial"
};

struct PlanRecord {
  Seconds time = 0.0;
  ClusterState state;  // includes the plan that became active
  Seconds step_seconds = 0.0;
  int cumulative_failures = 0;
};

struct SimTrace {
  SimPolicy policy = SimPolicy::kAdaptive;
  std::uint64_t seed = 0;
  std::vector<SimEvent> events;
  std::vector<SimInterval> intervals;
  std::vector<PlanRecord> plans;
  double total_samples = 0.0;
  Seconds total_time = 0.0;
  double average_throughput = 0.0;
  bool ended_early = false;
};

SimTrace run_simulation(const Scenario& scenario, const Profile& profile);

struct RatioStats {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
  std::vector<double> per_seed;
};

struct PolicyComparison {
  std::vector<std::uint64_t> seeds;
  // indexed like kAllSimPolicies, then by seed
  std::vector<std::vector<SimTrace>> traces;
  std::vector<double> mean_throughput;
  RatioStats adaptive_over_reroute;
  RatioStats adaptive_over_reconfigure;
  RatioStats reroute_over_reconfigure;
};

/// Runs every policy on every seed. Policies sharing a seed see the same
/// failure times.
PolicyComparison compare_policies(const Scenario& scenario, const Profile& profile,
                                  const std::vector<std::uint64_t>& seeds);

/// CSV with columns time_seconds,active_nodes,throughput,policy_event.
std::string trace_csv(const SimTrace& trace);

}  // namespace odyssey

#endif  // ODYSSEY_SIMULATOR_H_
