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

#include "odyssey/domain.h"

#include <algorithm>
#include <numeric>
#include <set>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace odyssey {

std::vector<std::string> validate_profile(const Profile& p) {
  std::vector<std::string> out;
  auto positive = [&out](const char* name, auto value) {
    if (!(value > 0)) out.push_back(fmt::format("profile.{} must be > 0", name));
  };
  positive("t_forward_per_layer", p.t_forward_per_layer);
  positive("t_backward_per_layer", p.t_backward_per_layer);
  positive("mem_params_per_layer", p.mem_params_per_layer);
  positive("mem_optimizer_per_layer", p.mem_optimizer_per_layer);
  positive("mem_grads_per_layer", p.mem_grads_per_layer);
  positive("mem_activation_per_layer_per_microbatch",
           p.mem_activation_per_layer_per_microbatch);
  positive("weight_bytes_per_layer", p.weight_bytes_per_layer);
  positive("link_bandwidth", p.link_bandwidth);
  positive("allreduce_time_per_layer", p.allreduce_time_per_layer);
  positive("restart_overhead", p.restart_overhead);
  positive("device_memory_limit", p.device_memory_limit);
  if (p.num_layers < 1) out.emplace_back("profile.num_layers must be >= 1");
  if (p.mem_grads_per_layer != p.mem_params_per_layer) {
    out.emplace_back("profile.mem_grads_per_layer must equal mem_params_per_layer");
  }
  return out;
}

const char* policy_name(Policy policy) {
  switch (policy) {
    case Policy::kDataRerouting:
      return "DataRerouting";
    case Policy::kDynamicParallelism:
      return "DynamicParallelism";
  }
  return "?";
}

Policy parse_policy(const std::string& name) {
  if (name == "DataRerouting") return Policy::kDataRerouting;
  if (name == "DynamicParallelism") return Policy::kDynamicParallelism;
  throw InputError("unknown policy '" + name + "'");
}

int ParallelConfig::num_nodes() const {
  return std::accumulate(stage_counts.begin(), stage_counts.end(), 0);
}

bool ParallelConfig::is_symmetric() const {
  return std::adjacent_find(stage_counts.begin(), stage_counts.end(),
                            std::not_equal_to<>()) == stage_counts.end();
}

int ExecutionPlan::num_failed() const {
  return std::accumulate(failure_distribution.begin(),
                         failure_distribution.end(), 0);
}

int ExecutionPlan::total_micro_batches() const {
  return std::accumulate(batch_assignment.begin(), batch_assignment.end(), 0);
}

int ExecutionPlan::max_micro_batches() const {
  if (batch_assignment.empty()) return 0;
  return *std::max_element(batch_assignment.begin(), batch_assignment.end());
}

SlotCoord ExecutionPlan::slot_coord(int slot) const {
  if (slot < 0) return {};
  for (int p = 0; p < static_cast<int>(parallel.stage_counts.size()); ++p) {
    if (slot < parallel.stage_counts[p]) return {p, slot};
    slot -= parallel.stage_counts[p];
  }
  return {};
}

int ExecutionPlan::slot_index(int pipeline, int stage) const {
  int slot = 0;
  for (int p = 0; p < pipeline; ++p) slot += parallel.stage_counts.at(p);
  return slot + stage;
}

bool ExecutionPlan::has_uniform_layout() const {
  if (!parallel.is_symmetric()) return false;
  return std::adjacent_find(layer_assignment.begin(), layer_assignment.end(),
                            std::not_equal_to<>()) == layer_assignment.end();
}

std::string plan_summary(const ExecutionPlan& plan) {
  std::string layers;
  for (const auto& pipeline : plan.layer_assignment) {
    std::vector<int> sizes;
    for (const auto& r : pipeline) sizes.push_back(r.size());
    layers += fmt::format("[{}]", fmt::join(sizes, ","));
  }
  std::string out = fmt::format(
      "{} dp={} stages=[{}] layers={} batches=[{}]", policy_name(plan.policy),
      plan.parallel.dp_degree, fmt::join(plan.parallel.stage_counts, ","),
      layers, fmt::join(plan.batch_assignment, ","));
  if (plan.policy == Policy::kDataRerouting) {
    out += fmt::format(" failures=[{}]", fmt::join(plan.failure_distribution, ","));
  }
  return out;
}

int ClusterState::micro_batches() const {
  if (global_batch_size <= 0 || micro_batch_size <= 0 ||
      global_batch_size % micro_batch_size != 0) {
    throw InputError(fmt::format(
        "global_batch_size {} is not a positive multiple of micro_batch_size {}",
        global_batch_size, micro_batch_size));
  }
  return global_batch_size / micro_batch_size;
}

int ClusterState::slot_of(int node) const {
  if (node_slots.empty()) {
    return node >= 0 && node < current_plan.num_slots() ? node : -1;
  }
  if (node < 0 || node >= static_cast<int>(node_slots.size())) return -1;
  return node_slots[node];
}

bool ClusterState::is_failed(int node) const {
  return std::any_of(failed_nodes.begin(), failed_nodes.end(),
                     [node](const FailedNode& f) { return f.node == node; });
}

std::vector<int> ClusterState::observed_failures() const {
  int max_stages = 0;
  for (int c : current_plan.parallel.stage_counts) max_stages = std::max(max_stages, c);
  std::vector<int> counts(max_stages, 0);
  for (const auto& f : failed_nodes) {
    const SlotCoord c = current_plan.slot_coord(slot_of(f.node));
    if (c.stage >= 0) ++counts[c.stage];
  }
  return counts;
}

std::vector<int> identity_slots(int total_nodes, const ExecutionPlan& plan) {
  std::vector<int> slots(total_nodes, -1);
  for (int n = 0; n < total_nodes && n < plan.num_slots(); ++n) slots[n] = n;
  return slots;
}

std::vector<std::string> validate_state(const ClusterState& s) {
  std::vector<std::string> out;
  if (s.total_nodes < 1) out.emplace_back("state.total_nodes must be >= 1");
  if (static_cast<long>(s.failed_nodes.size()) >= s.total_nodes) {
    out.emplace_back("every node has failed");
  }
  if (s.global_batch_size <= 0 || s.micro_batch_size <= 0 ||
      s.global_batch_size % s.micro_batch_size != 0) {
    out.emplace_back(
        "global_batch_size must be a positive multiple of micro_batch_size");
  }
  std::set<int> seen;
  for (const auto& f : s.failed_nodes) {
    if (f.node < 0 || f.node >= s.total_nodes) {
      out.push_back(fmt::format("failed node {} out of range", f.node));
      continue;
    }
    if (!seen.insert(f.node).second) {
      out.push_back(fmt::format("failed node {} listed twice", f.node));
    }
    const SlotCoord c = s.current_plan.slot_coord(s.slot_of(f.node));
    if (c.stage >= 0 && (c.pipeline != f.pipeline || c.stage != f.stage)) {
      out.push_back(fmt::format(
          "failed node {} recorded at ({},{}) but holds ({},{})", f.node,
          f.pipeline, f.stage, c.pipeline, c.stage));
    }
  }
  if (!s.node_slots.empty()) {
    if (static_cast<long>(s.node_slots.size()) != s.total_nodes) {
      out.emplace_back("node_slots must have one entry per node");
    } else {
      std::set<int> slots;
      for (int slot : s.node_slots) {
        if (slot < -1 || slot >= s.current_plan.num_slots()) {
          out.push_back(fmt::format("node slot {} out of range", slot));
        } else if (slot >= 0 && !slots.insert(slot).second) {
          out.push_back(fmt::format("slot {} held by two nodes", slot));
        }
      }
    }
  }
  return out;
}

namespace {

void check_shape(const ExecutionPlan& plan, int num_layers,
                 std::vector<std::string>& out) {
  const auto& pc = plan.parallel;
  if (pc.dp_degree < 1) out.emplace_back("dp_degree must be >= 1");
  if (static_cast<long>(pc.stage_counts.size()) != pc.dp_degree) {
    out.push_back(fmt::format("dp_degree {} does not match {} stage counts",
                              pc.dp_degree, pc.stage_counts.size()));
  }
  for (std::size_t p = 0; p < pc.stage_counts.size(); ++p) {
    if (pc.stage_counts[p] < 1) {
      out.push_back(fmt::format("pipeline {} has stage count {}", p, pc.stage_counts[p]));
    }
  }
  if (plan.layer_assignment.size() != pc.stage_counts.size()) {
    out.push_back(fmt::format("layer_assignment has {} pipelines, expected {}",
                              plan.layer_assignment.size(), pc.stage_counts.size()));
    return;
  }
  for (std::size_t p = 0; p < plan.layer_assignment.size(); ++p) {
    const auto& stages = plan.layer_assignment[p];
    if (static_cast<long>(stages.size()) != pc.stage_counts[p]) {
      out.push_back(fmt::format("pipeline {} has {} layer intervals, expected {}",
                                p, stages.size(), pc.stage_counts[p]));
      continue;
    }
    long next = 0;
    bool contiguous = true;
    for (std::size_t s = 0; s < stages.size(); ++s) {
      if (stages[s].begin != next || stages[s].end <= stages[s].begin) {
        contiguous = false;
        out.push_back(fmt::format(
            "pipeline {} stage {} interval [{},{}) is not contiguous and non-empty",
            p, s, stages[s].begin, stages[s].end));
        break;
      }
      next = stages[s].end;
    }
    if (contiguous && next != num_layers) {
      out.push_back(fmt::format("pipeline {} covers {} of {} layers", p, next,
                                num_layers));
    }
  }
}

}  // namespace

std::vector<std::string> validate_plan(const ExecutionPlan& plan,
                                       const ClusterState& state,
                                       const Profile& profile) {
  std::vector<std::string> out;
  check_shape(plan, profile.num_layers, out);
  const auto& pc = plan.parallel;

  if (static_cast<long>(plan.batch_assignment.size()) != pc.dp_degree) {
    out.push_back(fmt::format("batch_assignment has {} entries, expected {}",
                              plan.batch_assignment.size(), pc.dp_degree));
  } else if (state.global_batch_size > 0 && state.micro_batch_size > 0 &&
             state.global_batch_size % state.micro_batch_size == 0) {
    const long n_micro = state.global_batch_size / state.micro_batch_size;
    long sum = 0;
    bool has_zero = false;
    for (int b : plan.batch_assignment) {
      if (b < 0) out.push_back(fmt::format("negative micro-batch count {}", b));
      has_zero = has_zero || b == 0;
      sum += b;
    }
    if (sum != n_micro) {
      out.push_back(fmt::format("batch sum {} != micro-batch count {}", sum, n_micro));
    }
    if (has_zero && n_micro >= pc.dp_degree) {
      out.emplace_back("a pipeline received no micro-batches");
    }
  } else {
    out.emplace_back("micro-batch count is not a positive integer");
  }

  long failed = 0;
  if (plan.policy == Policy::kDataRerouting) {
    if (!plan.has_uniform_layout()) {
      out.emplace_back("data rerouting requires identical pipeline layouts");
    }
    const long n_pp = pc.stage_counts.empty() ? 0 : pc.stage_counts.front();
    if (static_cast<long>(plan.failure_distribution.size()) != n_pp) {
      out.push_back(fmt::format("failure_distribution has {} entries, expected {}",
                                plan.failure_distribution.size(), n_pp));
    }
    for (std::size_t i = 0; i < plan.failure_distribution.size(); ++i) {
      const int f = plan.failure_distribution[i];
      if (f < 0) out.push_back(fmt::format("stage {} failure count {} < 0", i, f));
      if (f >= pc.dp_degree) {
        out.push_back(fmt::format(
            "stage {} has no surviving data-parallel peer ({} of {} failed)", i,
            f, pc.dp_degree));
      }
      failed += f;
    }
  } else {
    for (int f : plan.failure_distribution) {
      if (f != 0) {
        out.emplace_back("failure_distribution must be zero under dynamic parallelism");
        break;
      }
    }
  }

  long slots = 0;
  for (int c : pc.stage_counts) slots += c;
  const long used = slots - failed;
  const long surviving = static_cast<long>(state.total_nodes) -
                         static_cast<long>(state.failed_nodes.size());
  if (used > surviving) {
    out.push_back(fmt::format("plan uses {} nodes but only {} survive", used, surviving));
  }
  return out;
}

}  // namespace odyssey
