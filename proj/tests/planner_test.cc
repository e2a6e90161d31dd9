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

#include <limits>

#include <gtest/gtest.h>

#include "fixtures.h"
#include "odyssey/estimator.h"
#include "odyssey/planner.h"
#include "oracles.h"

namespace odyssey {
namespace {

using testing::kGiB;
using testing::make_plan;
using testing::make_state;
using testing::symmetric_plan;
using testing::unit_profile;

// One unit of static memory and one unit of activation per layer, limit 10
// units: three-stage pipelines of three layers no longer fit on a device.
Profile tight_profile() {
  Profile p = unit_profile(9);
  p.mem_params_per_layer = kGiB / 4;
  p.mem_grads_per_layer = kGiB / 4;
  p.mem_optimizer_per_layer = kGiB / 2;
  p.mem_activation_per_layer_per_microbatch = kGiB;
  p.device_memory_limit = 10 * kGiB;
  return p;
}

SearchConfig config(IntRange dp, IntRange pp, int lookahead = 1) {
  SearchConfig c;
  c.dp_range = dp;
  c.pp_range = pp;
  c.max_faults_lookahead = lookahead;
  return c;
}

ClusterState nine_node_state(int failed_node) {
  const ExecutionPlan plan = symmetric_plan(3, {3, 3, 3}, 4);
  return make_state(9, plan, {{failed_node, failed_node / 3, failed_node % 3}});
}

TEST(IntegerPartition, Examples) {
  EXPECT_EQ(integer_partition(7, 2, {3, 4}), (std::vector<std::vector<int>>{{3, 4}}));
  EXPECT_EQ(integer_partition(9, 3, {3, 3}), (std::vector<std::vector<int>>{{3, 3, 3}}));
  EXPECT_TRUE(integer_partition(5, 2, {3, 3}).empty());
  EXPECT_EQ(integer_partition(8, 3, {2, 4}),
            (std::vector<std::vector<int>>{{2, 2, 4}, {2, 3, 3}}));
}

TEST(IntegerPartition, MatchesExhaustiveCount) {
  for (int n = 1; n <= 14; ++n) {
    for (int dp = 1; dp <= 4; ++dp) {
      const IntRange pp{1, 5};
      // count non-decreasing vectors by brute force over a dp-digit odometer
      int expected = 0;
      std::vector<int> v(dp, pp.lo);
      while (true) {
        int sum = 0;
        bool sorted = true;
        for (int k = 0; k < dp; ++k) {
          sum += v[k];
          if (k && v[k] < v[k - 1]) sorted = false;
        }
        if (sorted && sum == n) ++expected;
        int k = 0;
        while (k < dp && ++v[k] > pp.hi) v[k++] = pp.lo;
        if (k == dp) break;
      }
      EXPECT_EQ(static_cast<int>(integer_partition(n, dp, pp).size()), expected);
    }
  }
}

TEST(GetParallelStrategy, Examples) {
  EXPECT_EQ(get_parallel_strategy(8, 1, {2, 2}, {3, 4}),
            (std::vector<ParallelCandidate>{{2, {3, 4}}}));
  const auto nine = get_parallel_strategy(9, 1, {2, 4}, {2, 4});
  EXPECT_NE(std::find(nine.begin(), nine.end(), ParallelCandidate{2, {4, 4}}), nine.end());
  EXPECT_NE(std::find(nine.begin(), nine.end(), ParallelCandidate{4, {2, 2, 2, 2}}),
            nine.end());
  const auto four = get_parallel_strategy(4, 3, {1, 1}, {1, 1});
  EXPECT_EQ(four, (std::vector<ParallelCandidate>{{1, {1}}}));
  EXPECT_THROW(get_parallel_strategy(3, 3, {1, 1}, {1, 1}), std::invalid_argument);
  EXPECT_THROW(get_parallel_strategy(3, 0, {1, 1}, {1, 1}), std::invalid_argument);
}

TEST(DistributeBatch, Examples) {
  EXPECT_EQ(distribute_batch(12, {4, 3}).counts, (std::vector<int>{7, 5}));
  EXPECT_EQ(distribute_batch(8, {2, 2}).counts, (std::vector<int>{4, 4}));
  const BatchDistribution few = distribute_batch(2, {3, 3, 3});
  EXPECT_EQ(few.counts, (std::vector<int>{1, 1, 0}));
  EXPECT_TRUE(few.degraded);
  EXPECT_FALSE(distribute_batch(3, {3, 3, 3}).degraded);
}

TEST(DistributeBatch, ConservesAndFillsEveryPipeline) {
  for (int m = 1; m <= 40; ++m) {
    for (const auto& counts : std::vector<std::vector<int>>{
             {1}, {4, 3}, {1, 7}, {2, 2, 5}, {3, 3, 3, 3}, {1, 1, 1, 9}}) {
      const auto d = distribute_batch(m, counts);
      int sum = 0;
      for (int c : d.counts) sum += c;
      EXPECT_EQ(sum, m);
      EXPECT_EQ(d.degraded, m < static_cast<int>(counts.size()));
    }
  }
}

TEST(LayerSplit, CandidatePlacements) {
  EXPECT_EQ(layer_split_candidates(4, 9),
            (std::vector<std::vector<int>>{{2, 2, 2, 3}, {2, 2, 3, 2}, {2, 3, 2, 2}, {3, 2, 2, 2}}));
  EXPECT_EQ(layer_split_candidates(3, 9), (std::vector<std::vector<int>>{{3, 3, 3}}));
  const Profile p = unit_profile(9);
  EXPECT_EQ(split_layers(3, 9, p, 4), testing::intervals({3, 3, 3}));
  EXPECT_THROW(split_layers(4, 3, p, 4), InfeasibleError);
}

TEST(LayerSplit, PicksFasterOfTwoPlacements) {
  const Profile p = unit_profile(5);
  const auto a = testing::intervals({2, 3});
  const auto b = testing::intervals({3, 2});
  const double ta = simulate_pipeline_1f1b(stage_times(a, p), 4).makespan;
  const double tb = simulate_pipeline_1f1b(stage_times(b, p), 4).makespan;
  const auto expected = ta <= tb ? a : b;
  EXPECT_EQ(split_layers(2, 5, p, 4), expected);
}

TEST(LayerSplit, MemoryFilterAndError) {
  const Profile p = tight_profile();
  // only placements with the wide stage at the back fit
  const auto split = split_layers(4, 9, p, 6);
  EXPECT_TRUE(split == testing::intervals({2, 2, 2, 3}) ||
              split == testing::intervals({2, 2, 3, 2}));
  try {
    split_layers(3, 9, p, 6);
    FAIL() << "expected InfeasibleError";
  } catch (const InfeasibleError& e) {
    EXPECT_NE(std::string(e.what()).find("smallest peak"), std::string::npos);
  }
}

TEST(GetExecutionPlan, NineToEightNodesPicksTwoByFour) {
  const Profile p = tight_profile();
  const ClusterState s = nine_node_state(4);
  const ExecutionPlan plan = get_execution_plan(s, p, config({2, 4}, {2, 4}));
  EXPECT_EQ(plan.parallel.dp_degree, 2);
  EXPECT_EQ(plan.parallel.stage_counts, (std::vector<int>{4, 4}));
  EXPECT_EQ(plan.batch_assignment, (std::vector<int>{6, 6}));
  for (const auto& pipeline : plan.layer_assignment) {
    EXPECT_TRUE(pipeline == testing::intervals({2, 2, 2, 3}) ||
                pipeline == testing::intervals({2, 2, 3, 2}));
  }
  EXPECT_TRUE(validate_plan(plan, s, p).empty());
  EXPECT_TRUE(memory_violations(plan, p).empty());
}

TEST(GetExecutionPlan, SingleCandidateReturnedAsIs) {
  const Profile p = unit_profile(8);
  const ClusterState s = nine_node_state(8);
  const ExecutionPlan plan = get_execution_plan(s, p, config({2, 2}, {4, 4}));
  EXPECT_EQ(plan_summary(plan),
            "DynamicParallelism dp=2 stages=[4,4] layers=[2,2,2,2][2,2,2,2] batches=[6,6]");
}

// Exhaustive reference: every candidate, every per-pipeline placement,
// memory filter applied afterwards.
struct Reference {
  double best_feasible = std::numeric_limits<double>::infinity();
  double best_unfiltered = std::numeric_limits<double>::infinity();
  bool unfiltered_best_is_oom = false;
};

Reference exhaustive(const ClusterState& s, const Profile& p, const SearchConfig& cfg) {
  Reference ref;
  const int available = s.surviving_nodes();
  for (const auto& c : get_parallel_strategy(available + 1, cfg.max_faults_lookahead,
                                             cfg.dp_range, cfg.pp_range)) {
    ExecutionPlan plan;
    plan.parallel = {c.dp, c.stage_counts};
    plan.batch_assignment = distribute_batch(s.micro_batches(), c.stage_counts).counts;
    bool ok = true;
    bool oom = false;
    for (int k = 0; k < c.dp && ok; ++k) {
      const auto options = layer_split_candidates(c.stage_counts[k], p.num_layers);
      if (options.empty()) {
        ok = false;
        break;
      }
      double best = std::numeric_limits<double>::infinity();
      std::vector<int> pick;
      double best_fit = std::numeric_limits<double>::infinity();
      std::vector<int> pick_fit;
      for (const auto& sizes : options) {
        const double t = simulate_pipeline_1f1b(
            stage_times(testing::intervals(sizes), p), plan.batch_assignment[k]).makespan;
        bool fits = true;
        for (int st = 0; st < c.stage_counts[k]; ++st) {
          fits &= oracle::peak_bytes(p, st, sizes[st], c.stage_counts[k]) <= p.device_memory_limit;
        }
        if (t < best) best = t, pick = sizes;
        if (fits && t < best_fit) best_fit = t, pick_fit = sizes;
      }
      if (pick_fit.empty()) oom = true;
      plan.layer_assignment.push_back(testing::intervals(oom ? pick : pick_fit));
    }
    if (!ok) continue;
    const double step = step_time_asymmetric(plan, p);
    if (step < ref.best_unfiltered) {
      ref.best_unfiltered = step;
      ref.unfiltered_best_is_oom = oom;
    }
    if (!oom) ref.best_feasible = std::min(ref.best_feasible, step);
  }
  return ref;
}

TEST(GetExecutionPlan, OutOfMemoryCandidateNeverReturned) {
  const Profile p = tight_profile();
  const ClusterState s = nine_node_state(4);
  const SearchConfig cfg = config({1, 4}, {1, 8});
  const Reference ref = exhaustive(s, p, cfg);
  ASSERT_TRUE(ref.unfiltered_best_is_oom) << "instance does not exercise the filter";
  const ExecutionPlan plan = get_execution_plan(s, p, cfg);
  EXPECT_TRUE(memory_violations(plan, p).empty());
  EXPECT_DOUBLE_EQ(step_time_asymmetric(plan, p), ref.best_feasible);
}

TEST(GetExecutionPlan, AttainsEnumerationMinimum) {
  const Profile p = unit_profile(12, 1.0, 2.0);
  for (int total = 4; total <= 12; ++total) {
    const ExecutionPlan current = symmetric_plan(1, {12}, total);
    const ClusterState s = make_state(total, current, {{total - 1, -1, -1}});
    const SearchConfig cfg = config({1, 4}, {1, 6}, 2);
    const auto all = enumerate_execution_plans(s, p, cfg);
    ASSERT_FALSE(all.empty());
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : all) {
      best = std::min(best, e.step_seconds);
      EXPECT_TRUE(validate_plan(e.plan, s, p).empty()) << plan_summary(e.plan);
    }
    const ExecutionPlan plan = get_execution_plan(s, p, cfg);
    EXPECT_DOUBLE_EQ(step_time_asymmetric(plan, p), best);
    EXPECT_DOUBLE_EQ(exhaustive(s, p, cfg).best_feasible, best);
  }
}

TEST(GetExecutionPlan, NoFeasiblePlanEscalates) {
  Profile p = tight_profile();
  p.device_memory_limit = kGiB;
  EXPECT_THROW(get_execution_plan(nine_node_state(4), p, config({1, 4}, {1, 8})),
               InfeasibleError);
}

TEST(MonotoneDegradation, BestThroughputNeverRisesWithFailures) {
  const Profile p = unit_profile(8, 1.0, 2.0);
  const ExecutionPlan current = symmetric_plan(2, {2, 2, 2, 2}, 4);
  double previous = std::numeric_limits<double>::infinity();
  std::vector<FailedNode> failed;
  for (int k = 1; k <= 6; ++k) {
    failed.push_back({k - 1, (k - 1) / 4, (k - 1) % 4});
    const ClusterState s = make_state(8, current, failed);
    const SearchConfig cfg = config({1, 4}, {1, 8}, s.surviving_nodes());
    double best = 0.0;
    for (const auto& e : enumerate_execution_plans(s, p, cfg)) {
      best = std::max(best, s.global_batch_size / e.step_seconds);
    }
    EXPECT_LE(best, previous) << k << " failures";
    previous = best;
  }
}

TEST(EffectiveThroughput, Formula) {
  EXPECT_DOUBLE_EQ(effective_throughput(64, 2.0, 0.0, 100.0), 32.0);
  EXPECT_DOUBLE_EQ(effective_throughput(64, 2.0, 100.0, 100.0), 16.0);
  // equal step times: any positive transition strictly lowers the objective
  EXPECT_LT(effective_throughput(64, 2.0, 1e-3, 3600.0), effective_throughput(64, 2.0, 0.0, 3600.0));
}

TEST(SelectPolicy, NoNewFaultRetainsPlan) {
  const Profile p = unit_profile(8);
  const ClusterState s = make_state(8, symmetric_plan(2, {2, 2, 2, 2}, 4));
  const PlanDecision d = select_policy(s, p, config({1, 4}, {1, 8}));
  EXPECT_TRUE(d.retained);
  EXPECT_EQ(d.chosen, s.current_plan);
}

TEST(SelectPolicy, LostStageForcesReconfiguration) {
  const Profile p = unit_profile(8);
  const ClusterState s =
      make_state(8, symmetric_plan(2, {2, 2, 2, 2}, 4), {{0, 0, 0}, {4, 1, 0}});
  const PlanDecision d = select_policy(s, p, config({1, 4}, {1, 8}));
  EXPECT_EQ(d.chosen.policy, Policy::kDynamicParallelism);
  EXPECT_TRUE(d.forced);
  EXPECT_TRUE(d.rejected_alternatives.empty());
  EXPECT_LE(d.chosen.num_slots(), 6);
}

TEST(SelectPolicy, CheapReconfigurationWinsWhenFaster) {
  Profile p = unit_profile(8);
  p.restart_overhead = 1e-6;
  p.link_bandwidth = 1e15;
  // rerouting doubles stage 0's load; a 7-node plan is faster
  const ClusterState s = make_state(8, symmetric_plan(2, {2, 2, 2, 2}, 4), {{0, 0, 0}});
  SearchConfig cfg = config({1, 4}, {1, 8});
  cfg.expected_residence_seconds = 1e9;
  const PlanDecision d = select_policy(s, p, cfg);
  ASSERT_EQ(d.rejected_alternatives.size(), 1u);
  const double reroute_step = plan_step_time(
      [&] {
        ExecutionPlan r = s.current_plan;
        r.policy = Policy::kDataRerouting;
        r.failure_distribution = {1, 0, 0, 0};
        return r;
      }(),
      p);
  EXPECT_LT(d.estimated_step_seconds, reroute_step);
  EXPECT_EQ(d.chosen.policy, Policy::kDynamicParallelism);
  EXPECT_GE(d.objective_value, d.rejected_alternatives[0].objective);
}

TEST(SelectPolicy, ExpensiveRestartKeepsRerouting) {
  Profile p = unit_profile(8);
  p.restart_overhead = 1e9;
  const ClusterState s = make_state(8, symmetric_plan(2, {2, 2, 2, 2}, 4), {{0, 0, 0}});
  const PlanDecision d = select_policy(s, p, config({1, 4}, {1, 8}));
  EXPECT_EQ(d.chosen.policy, Policy::kDataRerouting);
  EXPECT_EQ(d.chosen.failure_distribution, (std::vector<int>{1, 0, 0, 0}));
  EXPECT_EQ(d.estimated_transition_seconds, 0.0);
  EXPECT_FALSE(d.forced);
  ASSERT_EQ(d.rejected_alternatives.size(), 1u);
  EXPECT_GE(d.objective_value, d.rejected_alternatives[0].objective);
}

TEST(SelectPolicy, DeterministicAndScaleInvariant) {
  const Profile p = unit_profile(8);
  const ClusterState s = make_state(8, symmetric_plan(2, {2, 2, 2, 2}, 4), {{5, 1, 1}});
  for (double residence : {1.0, 60.0, 3600.0, 1e6}) {
    SearchConfig cfg = config({1, 4}, {1, 8});
    cfg.expected_residence_seconds = residence;
    const PlanDecision a = select_policy(s, p, cfg);
    const PlanDecision b = select_policy(s, p, cfg);
    EXPECT_EQ(a.chosen, b.chosen);
    EXPECT_EQ(a.objective_value, b.objective_value);
    EXPECT_EQ(a.node_slots, b.node_slots);

    ClusterState scaled = s;
    scaled.global_batch_size *= 3;
    scaled.micro_batch_size *= 3;
    const PlanDecision c = select_policy(scaled, p, cfg);
    EXPECT_EQ(c.chosen, a.chosen);
    EXPECT_NEAR(c.objective_value, 3 * a.objective_value, 1e-9 * c.objective_value);
  }
}

TEST(SearchConfig, DefaultsAndValidation) {
  const SearchConfig cfg = default_search_config(symmetric_plan(3, {3, 3, 3}, 1), 100.0);
  EXPECT_EQ(cfg.dp_range, (IntRange{1, 5}));
  EXPECT_EQ(cfg.pp_range, (IntRange{1, 5}));
  EXPECT_TRUE(validate_search_config(cfg).empty());
  SearchConfig bad = cfg;
  bad.dp_range = {3, 2};
  bad.expected_residence_seconds = 0;
  EXPECT_EQ(validate_search_config(bad).size(), 2u);
}

}  // namespace
}  // namespace odyssey
