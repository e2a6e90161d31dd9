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

#ifndef ODYSSEY_ESTIMATOR_H_
#define ODYSSEY_ESTIMATOR_H_

#include <vector>

#include "odyssey/domain.h"

namespace odyssey {

/// Per-micro-batch forward/backward time of each stage of one pipeline.
struct StageTime {
  Seconds forward = 0.0;
  Seconds backward = 0.0;
};
using StageTimes = std::vector<StageTime>;

StageTimes stage_times(const std::vector<LayerRange>& stages, const Profile& profile);

enum class OpKind { kForward, kBackward };

struct PipelineOp {
  OpKind kind = OpKind::kForward;
  int micro_batch = 0;
  bool operator==(const PipelineOp&) const = default;
};

struct OpRecord {
  OpKind kind = OpKind::kForward;
  int micro_batch = 0;
  Seconds start = 0.0;
  Seconds end = 0.0;
};

struct ScheduleTrace {
  std::vector<std::vector<OpRecord>> stages;
  Seconds makespan = 0.0;
};

/// (n_stages + n_micro - 1) * (t_f + t_b). Throws std::domain_error on
/// zero counts.
Seconds step_time_symmetric(int n_stages, int n_micro, Seconds t_f, Seconds t_b);

/// Execution order of every stage under 1F1B: min(n_stages - s, n_micro)
/// warm-up forwards, then backward/forward alternation, then the drain.
std::vector<std::vector<PipelineOp>> build_1f1b_schedule(int n_stages, int n_micro);

/// Replays the 1F1B order: each op starts when both the previous op on its
/// stage and its producer on the neighbouring stage have finished.
ScheduleTrace simulate_pipeline_1f1b(const StageTimes& times, int n_micro);

/// Makespan of one pipeline of \p plan (0 when it has no micro-batches).
Seconds pipeline_makespan(const ExecutionPlan& plan, int pipeline,
                          const Profile& profile);

/// Slowest pipeline plus gradient synchronization.
Seconds step_time_asymmetric(const ExecutionPlan& plan, const Profile& profile);

/// Pipeline time under data rerouting. Throws InfeasibleError when a stage
/// has lost every data-parallel peer.
Seconds step_time_rerouting(const ExecutionPlan& plan, const Profile& profile);

/// Step time of any plan as used for throughput: the policy's pipeline
/// time plus gradient synchronization.
Seconds plan_step_time(const ExecutionPlan& plan, const Profile& profile);

/// Steady-state peak memory of one stage.
Bytes peak_memory(int stage_index, int n_layers_in_stage, int n_stages,
                  const Profile& profile);

struct MemoryViolation {
  int pipeline = 0;
  int stage = 0;
  Bytes peak = 0;
};

/// Stages whose peak memory exceeds device_memory_limit.
std::vector<MemoryViolation> memory_violations(const ExecutionPlan& plan,
                                               const Profile& profile);

/// Zero for rerouting; transfer plus restart for reconfiguration.
Seconds transition_time(const ExecutionPlan& old_plan, const ExecutionPlan& new_plan,
                        const Profile& profile, Seconds transfer_seconds);

}  // namespace odyssey

#endif  // ODYSSEY_ESTIMATOR_H_
