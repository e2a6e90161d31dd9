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

#include "odyssey/estimator.h"

#include <algorithm>

#include <fmt/format.h>

#include "odyssey/restorer.h"

namespace odyssey {

StageTimes stage_times(const std::vector<LayerRange>& stages, const Profile& profile) {
  StageTimes out;
  out.reserve(stages.size());
  for (const LayerRange& r : stages) {
    out.push_back({r.size() * profile.t_forward_per_layer,
                   r.size() * profile.t_backward_per_layer});
  }
  return out;
}

Seconds step_time_symmetric(int n_stages, int n_micro, Seconds t_f, Seconds t_b) {
  if (n_stages < 1 || n_micro < 1) {
    throw std::domain_error(fmt::format(
        "step_time_symmetric needs n_stages >= 1 and n_micro >= 1, got {} and {}",
        n_stages, n_micro));
  }
  return (n_stages + n_micro - 1) * (t_f + t_b);
}

std::vector<std::vector<PipelineOp>> build_1f1b_schedule(int n_stages, int n_micro) {
  std::vector<std::vector<PipelineOp>> order(n_stages);
  for (int s = 0; s < n_stages; ++s) {
    auto& ops = order[s];
    const int warmup = std::min(n_stages - s, n_micro);
    int next_f = 0;
    int next_b = 0;
    for (; next_f < warmup; ++next_f) ops.push_back({OpKind::kForward, next_f});
    while (next_f < n_micro) {
      ops.push_back({OpKind::kBackward, next_b++});
      ops.push_back({OpKind::kForward, next_f++});
    }
    while (next_b < n_micro) ops.push_back({OpKind::kBackward, next_b++});
  }
  return order;
}

ScheduleTrace simulate_pipeline_1f1b(const StageTimes& times, int n_micro) {
  const int n_stages = static_cast<int>(times.size());
  const auto order = build_1f1b_schedule(n_stages, n_micro);

  // end time of forward/backward j at stage s, negative until computed
  std::vector<std::vector<Seconds>> f_end(n_stages, std::vector<Seconds>(n_micro, -1.0));
  std::vector<std::vector<Seconds>> b_end(n_stages, std::vector<Seconds>(n_micro, -1.0));

  ScheduleTrace trace;
  trace.stages.resize(n_stages);
  std::vector<std::size_t> cursor(n_stages, 0);
  std::size_t remaining = 0;
  for (const auto& ops : order) remaining += ops.size();

  while (remaining > 0) {
    bool progressed = false;
    for (int s = 0; s < n_stages; ++s) {
      while (cursor[s] < order[s].size()) {
        const PipelineOp op = order[s][cursor[s]];
        const int j = op.micro_batch;
        Seconds ready = 0.0;
        if (op.kind == OpKind::kForward) {
          if (s > 0) ready = f_end[s - 1][j];
        } else if (s + 1 < n_stages) {
          ready = b_end[s + 1][j];
        } else {
          ready = f_end[s][j];
        }
        if (ready < 0.0) break;
        const Seconds prev = trace.stages[s].empty() ? 0.0 : trace.stages[s].back().end;
        const Seconds start = std::max(prev, ready);
        const Seconds duration =
            op.kind == OpKind::kForward ? times[s].forward : times[s].backward;
        const Seconds end = start + duration;
        (op.kind == OpKind::kForward ? f_end : b_end)[s][j] = end;
        trace.stages[s].push_back({op.kind, j, start, end});
        ++cursor[s];
        --remaining;
        progressed = true;
      }
    }
    if (!progressed) throw std::logic_error("1F1B schedule deadlocked");
  }
  if (n_stages > 0 && n_micro > 0) trace.makespan = trace.stages[0].back().end;
  return trace;
}

Seconds pipeline_makespan(const ExecutionPlan& plan, int pipeline,
                          const Profile& profile) {
  const int n_micro = plan.batch_assignment.at(pipeline);
  if (n_micro <= 0) return 0.0;
  return simulate_pipeline_1f1b(stage_times(plan.layer_assignment.at(pipeline), profile),
                                n_micro)
      .makespan;
}

Seconds step_time_asymmetric(const ExecutionPlan& plan, const Profile& profile) {
  if (plan.policy != Policy::kDynamicParallelism) {
    throw std::invalid_argument("step_time_asymmetric needs a dynamic-parallelism plan");
  }
  Seconds slowest = 0.0;
  for (int p = 0; p < plan.parallel.dp_degree; ++p) {
    slowest = std::max(slowest, pipeline_makespan(plan, p, profile));
  }
  return slowest + sync_time(plan, profile);
}

Seconds step_time_rerouting(const ExecutionPlan& plan, const Profile& profile) {
  if (plan.policy != Policy::kDataRerouting) {
    throw std::invalid_argument("step_time_rerouting needs a data-rerouting plan");
  }
  if (!plan.has_uniform_layout() || plan.layer_assignment.empty()) {
    throw InfeasibleError("data rerouting needs identical pipeline layouts");
  }
  const int n_dp = plan.parallel.dp_degree;
  const int n_pp = plan.parallel.stage_counts.front();
  const int n_m = plan.max_micro_batches();

  Seconds stage_cost = 0.0;
  for (const StageTime& t : stage_times(plan.layer_assignment.front(), profile)) {
    stage_cost = std::max(stage_cost, t.forward + t.backward);
  }

  double penalty = 0.0;
  for (std::size_t i = 0; i < plan.failure_distribution.size(); ++i) {
    const int f = plan.failure_distribution[i];
    if (f >= n_dp) {
      throw InfeasibleError(fmt::format(
          "stage {} lost {} of {} data-parallel peers; rerouting cannot recover", i,
          f, n_dp));
    }
    if (f > 0) penalty += static_cast<double>(n_m) * f / (n_dp - f);
  }
  return (n_pp + n_m - 1 + penalty) * stage_cost;
}

Seconds plan_step_time(const ExecutionPlan& plan, const Profile& profile) {
  if (plan.policy == Policy::kDataRerouting) {
    return step_time_rerouting(plan, profile) + sync_time(plan, profile);
  }
  return step_time_asymmetric(plan, profile);
}

Bytes peak_memory(int stage_index, int n_layers_in_stage, int n_stages,
                  const Profile& profile) {
  if (stage_index < 0 || stage_index >= n_stages) {
    throw std::domain_error(fmt::format("stage index {} outside [0, {})",
                                        stage_index, n_stages));
  }
  const Bytes layers = n_layers_in_stage;
  const Bytes static_mem = layers * (profile.mem_params_per_layer +
                                     profile.mem_optimizer_per_layer +
                                     profile.mem_grads_per_layer);
  const Bytes in_flight = n_stages - stage_index;
  return static_mem + in_flight * layers * profile.mem_activation_per_layer_per_microbatch;
}

std::vector<MemoryViolation> memory_violations(const ExecutionPlan& plan,
                                               const Profile& profile) {
  std::vector<MemoryViolation> out;
  for (std::size_t p = 0; p < plan.layer_assignment.size(); ++p) {
    const auto& stages = plan.layer_assignment[p];
    const int n_stages = static_cast<int>(stages.size());
    for (int s = 0; s < n_stages; ++s) {
      const Bytes peak = peak_memory(s, stages[s].size(), n_stages, profile);
      if (peak > profile.device_memory_limit) {
        out.push_back({static_cast<int>(p), s, peak});
      }
    }
  }
  return out;
}

Seconds transition_time(const ExecutionPlan& /*old_plan*/, const ExecutionPlan& new_plan,
                        const Profile& profile, Seconds transfer_seconds) {
  if (new_plan.policy == Policy::kDataRerouting) return 0.0;
  // Plan search runs ahead of time and overlaps training.
  return transfer_seconds + profile.restart_overhead;
}

}  // namespace odyssey
