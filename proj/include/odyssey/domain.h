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

#ifndef ODYSSEY_DOMAIN_H_
#define ODYSSEY_DOMAIN_H_

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace odyssey {

using Seconds = double;
using Bytes = std::int64_t;

/// Malformed or schema-violating input (CLI exit code 2).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No plan satisfies the constraints (CLI exit code 3).
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Measured per-layer costs of the model on the target hardware.
struct Profile {
  Seconds t_forward_per_layer = 0.0;
  Seconds t_backward_per_layer = 0.0;
  Bytes mem_params_per_layer = 0;
  Bytes mem_optimizer_per_layer = 0;
  Bytes mem_grads_per_layer = 0;
  Bytes mem_activation_per_layer_per_microbatch = 0;
  Bytes weight_bytes_per_layer = 0;
  double link_bandwidth = 0.0;  // bytes/second
  Seconds allreduce_time_per_layer = 0.0;
  Seconds restart_overhead = 0.0;
  Bytes device_memory_limit = 0;
  int num_layers = 0;

  bool operator==(const Profile&) const = default;
};

std::vector<std::string> validate_profile(const Profile& profile);

enum class Policy { kDataRerouting, kDynamicParallelism };

const char* policy_name(Policy policy);
Policy parse_policy(const std::string& name);

/// Half-open interval of layer indices [begin, end).
struct LayerRange {
  int begin = 0;
  int end = 0;

  int size() const { return end - begin; }
  bool contains(int layer) const { return layer >= begin && layer < end; }
  auto operator<=>(const LayerRange&) const = default;
};

struct ParallelConfig {
  int dp_degree = 0;
  std::vector<int> stage_counts;  // one entry per pipeline

  int num_nodes() const;
  bool is_symmetric() const;
  bool operator==(const ParallelConfig&) const = default;
};

struct SlotCoord {
  int pipeline = -1;
  int stage = -1;
  bool operator==(const SlotCoord&) const = default;
};

/// One fault-tolerance configuration: policy, parallel shape, and the
/// layer/batch/failure distributions. Slots are numbered row-major over
/// (pipeline, stage).
struct ExecutionPlan {
  Policy policy = Policy::kDynamicParallelism;
  ParallelConfig parallel;
  std::vector<std::vector<LayerRange>> layer_assignment;
  std::vector<int> batch_assignment;
  // Failed nodes per stage index. Only meaningful under data rerouting.
  std::vector<int> failure_distribution;

  int num_slots() const { return parallel.num_nodes(); }
  int num_failed() const;
  int active_nodes() const { return num_slots() - num_failed(); }
  int total_micro_batches() const;
  int max_micro_batches() const;

  SlotCoord slot_coord(int slot) const;
  int slot_index(int pipeline, int stage) const;
  LayerRange layers_at(int pipeline, int stage) const {
    return layer_assignment.at(pipeline).at(stage);
  }

  /// True when every pipeline has the same stage count and layer split.
  bool has_uniform_layout() const;

  bool operator==(const ExecutionPlan&) const = default;
};

/// Canonical one-line encoding, also used as the final tie-breaker.
std::string plan_summary(const ExecutionPlan& plan);

struct FailedNode {
  int node = 0;
  int pipeline = -1;  // -1 when the node held no slot
  int stage = -1;
  bool operator==(const FailedNode&) const = default;
};

struct ClusterState {
  int total_nodes = 0;
  std::vector<FailedNode> failed_nodes;
  ExecutionPlan current_plan;
  int global_batch_size = 0;
  int micro_batch_size = 0;
  // node id -> slot of current_plan, or -1 when idle. Empty means the
  // row-major identity (node i holds slot i).
  std::vector<int> node_slots;

  int surviving_nodes() const {
    return total_nodes - static_cast<int>(failed_nodes.size());
  }
  /// Global micro-batch count; throws InputError if not a positive integer.
  int micro_batches() const;
  int slot_of(int node) const;
  bool is_failed(int node) const;

  /// Failed nodes per stage of current_plan, counting every failed node
  /// that still occupies a slot.
  std::vector<int> observed_failures() const;

  bool operator==(const ClusterState&) const = default;
};

std::vector<std::string> validate_state(const ClusterState& state);

/// Violations of the plan invariants against a cluster and profile. Never
/// throws on out-of-range numbers.
std::vector<std::string> validate_plan(const ExecutionPlan& plan,
                                       const ClusterState& state,
                                       const Profile& profile);

/// Row-major slot ownership for a cluster of \p total_nodes running \p plan.
std::vector<int> identity_slots(int total_nodes, const ExecutionPlan& plan);

}  // namespace odyssey

#endif  // ODYSSEY_DOMAIN_H_
