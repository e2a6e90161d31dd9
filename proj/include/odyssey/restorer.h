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

#ifndef ODYSSEY_RESTORER_H_
#define ODYSSEY_RESTORER_H_

#include <cstdint>
#include <span>
#include <vector>

#include "odyssey/domain.h"

namespace odyssey {

/// Sorted layer indices held by one node.
using LayerSet = std::vector<int>;

LayerSet to_layer_set(LayerRange range);

/// Layers node i would have to download to serve slot j of a new plan.
/// Columns past the new plan's slot count are zero-cost idle slots.
struct CostMatrix {
  int n = 0;
  std::vector<std::int64_t> cost;  // row-major n*n

  std::int64_t at(int row, int col) const { return cost[row * n + col]; }
  std::int64_t& at(int row, int col) { return cost[row * n + col]; }
};

CostMatrix build_cost_matrix(std::span<const LayerSet> old_node_layers,
                             const ExecutionPlan& new_plan);

struct TransferAssignment {
  std::vector<int> slot_of_node;  // permutation of 0..n-1
  std::int64_t total_cost_layers = 0;
  // Filled by plan_weight_transfer.
  std::vector<LayerSet> received_layers;
  std::vector<std::vector<int>> sources;  // parallel to received_layers; -1 = no live holder
  Seconds transfer_seconds = 0.0;
};

/// Kuhn-Munkres with O(n^3) potentials; among all minimum-cost
/// permutations returns the lexicographically smallest one.
TransferAssignment min_cost_assignment(const CostMatrix& m);

/// Receiver-bound transfer model: receivers download concurrently, a single
/// receiver's downloads serialize.
Seconds transfer_time(const TransferAssignment& a, const Profile& profile);

/// Cost matrix, optimal assignment, sender selection and transfer time in
/// one pass. old_node_layers is indexed by surviving node.
TransferAssignment plan_weight_transfer(std::span<const LayerSet> old_node_layers,
                                        const ExecutionPlan& new_plan,
                                        const Profile& profile);

/// Layers are vertices; an edge joins two layers held by the same device.
struct ConflictGraph {
  int num_layers = 0;
  std::vector<std::vector<int>> adjacency;  // sorted neighbour lists

  bool has_edge(int u, int v) const;
  int edge_count() const;
  int max_degree() const;
};

ConflictGraph build_conflict_graph(const ExecutionPlan& plan, int num_layers);

struct CommSchedule {
  std::vector<int> round_of_layer;
  int num_rounds = 0;
  std::vector<std::vector<int>> rounds;
};

/// Greedy colouring in ascending layer order.
CommSchedule color_comm_rounds(const ConflictGraph& g);

/// Rounds run serially, layers within a round in parallel.
Seconds comm_time(const CommSchedule& s, const ExecutionPlan& plan,
                  const Profile& profile);

/// Gradient synchronization time of a plan; zero without data parallelism.
Seconds sync_time(const ExecutionPlan& plan, const Profile& profile);

}  // namespace odyssey

#endif  // ODYSSEY_RESTORER_H_
