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

#ifndef ODYSSEY_PLANNER_H_
#define ODYSSEY_PLANNER_H_

#include <optional>
#include <string>
#include <vector>

#include "odyssey/domain.h"
#include "odyssey/restorer.h"

namespace odyssey {

/// Inclusive integer interval.
struct IntRange {
  int lo = 1;
  int hi = 1;
  bool contains(int v) const { return v >= lo && v <= hi; }
  bool operator==(const IntRange&) const = default;
};

struct SearchConfig {
  IntRange dp_range;
  IntRange pp_range;
  // Candidates use the available node count minus 0..lookahead-1 idle nodes.
  int max_faults_lookahead = 1;
  Seconds expected_residence_seconds = 3600.0;
  // Restrict to pipelines of equal length (predefined-template baseline).
  bool symmetric_only = false;

  bool operator==(const SearchConfig&) const = default;
};

std::vector<std::string> validate_search_config(const SearchConfig& cfg);

/// DP within two of the current degree; PP within two of the current
/// pipeline lengths.
SearchConfig default_search_config(const ExecutionPlan& current,
                                   Seconds expected_residence_seconds);

/// User-supplied fields replace the defaults derived from the current plan.
struct SearchOverrides {
  std::optional<IntRange> dp_range;
  std::optional<IntRange> pp_range;
  std::optional<int> max_faults_lookahead;
  std::optional<Seconds> expected_residence_seconds;
  bool operator==(const SearchOverrides&) const = default;
};

SearchConfig resolve_search_config(const SearchOverrides& overrides,
                                   const ExecutionPlan& current,
                                   Seconds default_residence_seconds);

/// Non-decreasing vectors of length dp with entries in pp_range summing to
/// n_nodes, in lexicographic order.
std::vector<std::vector<int>> integer_partition(int n_nodes, int dp, IntRange pp_range);

struct ParallelCandidate {
  int dp = 0;
  std::vector<int> stage_counts;
  bool operator==(const ParallelCandidate&) const = default;
};

/// Candidates over n_nodes - i nodes for i in 1..max_faults and every dp in
/// dp_range. Throws std::invalid_argument unless n_nodes > max_faults >= 1.
std::vector<ParallelCandidate> get_parallel_strategy(int n_nodes, int max_faults,
                                                     IntRange dp_range,
                                                     IntRange pp_range);

struct BatchDistribution {
  std::vector<int> counts;
  bool degraded = false;  // some pipeline has no micro-batch
};

BatchDistribution distribute_batch(int n_micro, const std::vector<int>& stage_counts);

/// Layer-count vectors with floor(L/S) layers per stage plus one extra
/// layer on each stage of a chosen subset of size L mod S.
std::vector<std::vector<int>> layer_split_candidates(int stage_count, int num_layers);

/// Memory-feasible split with the smallest simulated makespan; ties go to
/// the lexicographically smallest split. Throws InfeasibleError.
std::vector<LayerRange> split_layers(int stage_count, int num_layers,
                                     const Profile& profile, int n_micro);

struct EvaluatedPlan {
  ExecutionPlan plan;
  Seconds step_seconds = 0.0;
};

/// Every memory-feasible dynamic plan the search visits, in visiting order.
/// Reasons for discarded candidates are appended to \p rejections.
std::vector<EvaluatedPlan> enumerate_execution_plans(
    const ClusterState& state, const Profile& profile, const SearchConfig& cfg,
    std::vector<std::string>* rejections = nullptr);

/// Surviving node ids (ascending) and the layers each currently holds.
struct SurvivorLayout {
  std::vector<int> nodes;
  std::vector<LayerSet> layers;
};
SurvivorLayout survivor_layout(const ClusterState& state);

/// Plan with the smallest estimated step time; ties by transition time and
/// then the canonical plan encoding. Throws InfeasibleError.
ExecutionPlan get_execution_plan(const ClusterState& state, const Profile& profile,
                                 const SearchConfig& cfg);

struct RejectedAlternative {
  std::string summary;
  double objective = 0.0;
};

struct PlanDecision {
  ExecutionPlan chosen;
  double objective_value = 0.0;  // effective samples/second
  std::vector<RejectedAlternative> rejected_alternatives;
  Seconds estimated_step_seconds = 0.0;
  Seconds estimated_transition_seconds = 0.0;
  bool retained = false;  // no new fault touched the plan
  bool forced = false;    // rerouting was infeasible
  std::vector<int> node_slots;  // ownership after the switch, one per node
  TransferAssignment transfer;  // empty unless reconfiguring
};

/// B / t_step * t_exp / (t_trans + t_exp)
double effective_throughput(int global_batch_size, Seconds step_seconds,
                            Seconds transition_seconds, Seconds expected_residence);

enum class SelectionMode {
  kAdaptive,           // argmax of the objective
  kPreferRerouting,    // reroute until infeasible
  kAlwaysReconfigure,  // re-plan on every fault
};

PlanDecision decide_plan(const ClusterState& state, const Profile& profile,
                         const SearchConfig& cfg, SelectionMode mode);

inline PlanDecision select_policy(const ClusterState& state, const Profile& profile,
                                  const SearchConfig& cfg) {
  return decide_plan(state, profile, cfg, SelectionMode::kAdaptive);
}

}  // namespace odyssey

#endif  // ODYSSEY_PLANNER_H_
