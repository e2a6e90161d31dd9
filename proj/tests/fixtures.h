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

#ifndef ODYSSEY_TESTS_FIXTURES_H_
#define ODYSSEY_TESTS_FIXTURES_H_

#include <vector>

#include "odyssey/domain.h"

namespace odyssey::testing {

inline constexpr Bytes kGiB = Bytes{1} << 30;

/// Small profile with unit-ish numbers and a roomy memory cap.
inline Profile unit_profile(int num_layers, double t_f = 1.0, double t_b = 2.0) {
  Profile p;
  p.t_forward_per_layer = t_f;
  p.t_backward_per_layer = t_b;
  p.mem_params_per_layer = kGiB;
  p.mem_optimizer_per_layer = kGiB;
  p.mem_grads_per_layer = kGiB;
  p.mem_activation_per_layer_per_microbatch = kGiB / 2;
  p.weight_bytes_per_layer = kGiB;
  p.link_bandwidth = static_cast<double>(kGiB);
  p.allreduce_time_per_layer = 0.5;
  p.restart_overhead = 5.0;
  p.device_memory_limit = 1024 * kGiB;
  p.num_layers = num_layers;
  return p;
}

inline std::vector<LayerRange> intervals(const std::vector<int>& sizes) {
  std::vector<LayerRange> out;
  int begin = 0;
  for (int n : sizes) {
    out.push_back({begin, begin + n});
    begin += n;
  }
  return out;
}

/// Plan whose pipelines use the given per-stage layer counts.
inline ExecutionPlan make_plan(const std::vector<std::vector<int>>& layer_sizes,
                               const std::vector<int>& batches,
                               Policy policy = Policy::kDynamicParallelism) {
  ExecutionPlan plan;
  plan.policy = policy;
  plan.parallel.dp_degree = static_cast<int>(layer_sizes.size());
  for (const auto& sizes : layer_sizes) {
    plan.parallel.stage_counts.push_back(static_cast<int>(sizes.size()));
    plan.layer_assignment.push_back(intervals(sizes));
  }
  plan.batch_assignment = batches;
  if (policy == Policy::kDataRerouting) {
    plan.failure_distribution.assign(plan.parallel.stage_counts.front(), 0);
  }
  return plan;
}

inline ExecutionPlan symmetric_plan(int dp, const std::vector<int>& sizes, int per_pipeline_batch,
                                    Policy policy = Policy::kDynamicParallelism) {
  return make_plan(std::vector<std::vector<int>>(dp, sizes),
                   std::vector<int>(dp, per_pipeline_batch), policy);
}

inline ClusterState make_state(int total_nodes, const ExecutionPlan& plan,
                               std::vector<FailedNode> failed = {}) {
  ClusterState s;
  s.total_nodes = total_nodes;
  s.current_plan = plan;
  s.failed_nodes = std::move(failed);
  s.global_batch_size = plan.total_micro_batches();
  s.micro_batch_size = 1;
  return s;
}

}  // namespace odyssey::testing

#endif  // ODYSSEY_TESTS_FIXTURES_H_
