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

#include "odyssey/restorer.h"

#include <algorithm>
#include <limits>

#include <fmt/format.h>

namespace odyssey {

LayerSet to_layer_set(LayerRange range) {
  LayerSet out;
  for (int l = range.begin; l < range.end; ++l) out.push_back(l);
  return out;
}

CostMatrix build_cost_matrix(std::span<const LayerSet> old_node_layers,
                             const ExecutionPlan& new_plan) {
  const int n = static_cast<int>(old_node_layers.size());
  const int slots = new_plan.num_slots();
  if (slots > n) {
    throw std::invalid_argument(fmt::format(
        "new plan needs {} nodes but only {} survive", slots, n));
  }
  CostMatrix m{n, std::vector<std::int64_t>(static_cast<std::size_t>(n) * n, 0)};
  for (int j = 0; j < slots; ++j) {
    const SlotCoord c = new_plan.slot_coord(j);
    const LayerRange want = new_plan.layers_at(c.pipeline, c.stage);
    for (int i = 0; i < n; ++i) {
      const LayerSet& have = old_node_layers[i];
      std::int64_t missing = 0;
      for (int l = want.begin; l < want.end; ++l) {
        if (!std::binary_search(have.begin(), have.end(), l)) ++missing;
      }
      m.at(i, j) = missing;
    }
  }
  return m;
}

namespace {

// Rows and columns 1-based; p[col] = row matched to col.
struct Potentials {
  std::vector<std::int64_t> u, v;
  std::vector<int> p;
};

Potentials hungarian(const CostMatrix& m) {
  const int n = m.n;
  constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;
  Potentials r{std::vector<std::int64_t>(n + 1, 0),
               std::vector<std::int64_t>(n + 1, 0), std::vector<int>(n + 1, 0)};
  std::vector<int> way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    r.p[0] = i;
    int j0 = 0;
    std::vector<std::int64_t> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = r.p[j0];
      std::int64_t delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const std::int64_t cur = m.at(i0 - 1, j - 1) - r.u[i0] - r.v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          r.u[r.p[j]] += delta;
          r.v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (r.p[j0] != 0);
    do {
      const int j1 = way[j0];
      r.p[j0] = r.p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  return r;
}

}  // namespace

TransferAssignment min_cost_assignment(const CostMatrix& m) {
  const int n = m.n;
  TransferAssignment out;
  if (n == 0) return out;
  const Potentials pot = hungarian(m);

  // Every optimal permutation uses only edges that are tight under the
  // optimal duals, so the lexicographic minimum is a greedy walk over
  // tight edges with an alternating-path feasibility check.
  auto tight = [&](int i, int j) {
    return m.at(i, j) - pot.u[i + 1] - pot.v[j + 1] == 0;
  };
  std::vector<int> col_of(n), row_of(n);
  for (int j = 1; j <= n; ++j) {
    col_of[pot.p[j] - 1] = j - 1;
    row_of[j - 1] = pot.p[j] - 1;
  }

  for (int i = 0; i < n; ++i) {
    const int target = col_of[i];  // column row i releases
    for (int j = 0; j < target; ++j) {
      if (!tight(i, j) || row_of[j] < i) continue;
      // Rematch row_of[j] through rows > i until column target is free.
      std::vector<int> parent_col(n, -2);
      std::vector<int> queue{row_of[j]};
      std::vector<char> seen_col(n, 0);
      seen_col[j] = 1;
      int reached = -1;
      for (std::size_t q = 0; q < queue.size() && reached < 0; ++q) {
        const int r = queue[q];
        for (int c = 0; c < n; ++c) {
          if (seen_col[c] || !tight(r, c) || row_of[c] < i) continue;
          seen_col[c] = 1;
          parent_col[c] = r;
          if (c == target) {
            reached = c;
            break;
          }
          queue.push_back(row_of[c]);
        }
      }
      if (reached < 0) continue;
      // Walk back: row parent_col[c] takes column c; its old column is
      // taken by the previous row in the chain.
      int c = reached;
      while (true) {
        const int r = parent_col[c];
        const int prev = col_of[r];
        col_of[r] = c;
        row_of[c] = r;
        if (prev == j) break;
        c = prev;
      }
      col_of[i] = j;
      row_of[j] = i;
      break;
    }
  }

  out.slot_of_node = col_of;
  for (int i = 0; i < n; ++i) out.total_cost_layers += m.at(i, col_of[i]);
  return out;
}

Seconds transfer_time(const TransferAssignment& a, const Profile& profile) {
  std::size_t most = 0;
  for (const auto& layers : a.received_layers) most = std::max(most, layers.size());
  return static_cast<double>(most) *
         static_cast<double>(profile.weight_bytes_per_layer) /
         profile.link_bandwidth;
}

TransferAssignment plan_weight_transfer(std::span<const LayerSet> old_node_layers,
                                        const ExecutionPlan& new_plan,
                                        const Profile& profile) {
  const CostMatrix m = build_cost_matrix(old_node_layers, new_plan);
  TransferAssignment a = min_cost_assignment(m);
  const int n = m.n;
  const int slots = new_plan.num_slots();
  a.received_layers.assign(n, {});
  a.sources.assign(n, {});
  std::vector<int> outbound(n, 0);
  for (int i = 0; i < n; ++i) {
    const int slot = a.slot_of_node[i];
    if (slot >= slots) continue;
    const SlotCoord c = new_plan.slot_coord(slot);
    const LayerRange want = new_plan.layers_at(c.pipeline, c.stage);
    const LayerSet& have = old_node_layers[i];
    for (int l = want.begin; l < want.end; ++l) {
      if (std::binary_search(have.begin(), have.end(), l)) continue;
      int sender = -1;
      for (int k = 0; k < n; ++k) {
        const LayerSet& held = old_node_layers[k];
        if (!std::binary_search(held.begin(), held.end(), l)) continue;
        if (sender < 0 || outbound[k] < outbound[sender]) sender = k;
      }
      if (sender >= 0) ++outbound[sender];
      a.received_layers[i].push_back(l);
      a.sources[i].push_back(sender);
    }
  }
  a.transfer_seconds = transfer_time(a, profile);
  return a;
}

bool ConflictGraph::has_edge(int u, int v) const {
  const auto& adj = adjacency.at(u);
  return std::binary_search(adj.begin(), adj.end(), v);
}

int ConflictGraph::edge_count() const {
  std::size_t twice = 0;
  for (const auto& adj : adjacency) twice += adj.size();
  return static_cast<int>(twice / 2);
}

int ConflictGraph::max_degree() const {
  std::size_t most = 0;
  for (const auto& adj : adjacency) most = std::max(most, adj.size());
  return static_cast<int>(most);
}

ConflictGraph build_conflict_graph(const ExecutionPlan& plan, int num_layers) {
  std::vector<std::vector<char>> edge(num_layers, std::vector<char>(num_layers, 0));
  for (const auto& pipeline : plan.layer_assignment) {
    for (const LayerRange& r : pipeline) {
      for (int u = r.begin; u < r.end; ++u) {
        for (int v = u + 1; v < r.end; ++v) edge[u][v] = edge[v][u] = 1;
      }
    }
  }
  ConflictGraph g{num_layers, std::vector<std::vector<int>>(num_layers)};
  for (int u = 0; u < num_layers; ++u) {
    for (int v = 0; v < num_layers; ++v) {
      if (edge[u][v]) g.adjacency[u].push_back(v);
    }
  }
  return g;
}

CommSchedule color_comm_rounds(const ConflictGraph& g) {
  CommSchedule s;
  s.round_of_layer.assign(g.num_layers, -1);
  std::vector<char> taken;
  for (int u = 0; u < g.num_layers; ++u) {
    taken.assign(g.adjacency[u].size() + 1, 0);
    for (int v : g.adjacency[u]) {
      const int r = s.round_of_layer[v];
      if (r >= 0 && r < static_cast<int>(taken.size())) taken[r] = 1;
    }
    int round = 0;
    while (taken[round]) ++round;
    s.round_of_layer[u] = round;
    s.num_rounds = std::max(s.num_rounds, round + 1);
  }
  s.rounds.assign(s.num_rounds, {});
  for (int u = 0; u < g.num_layers; ++u) s.rounds[s.round_of_layer[u]].push_back(u);
  return s;
}

Seconds comm_time(const CommSchedule& s, const ExecutionPlan& /*plan*/,
                  const Profile& profile) {
  // Per-layer AllReduce cost is uniform, so each non-empty round costs one
  // layer's synchronization.
  Seconds total = 0.0;
  for (const auto& round : s.rounds) {
    if (!round.empty()) total += profile.allreduce_time_per_layer;
  }
  return total;
}

Seconds sync_time(const ExecutionPlan& plan, const Profile& profile) {
  if (plan.parallel.dp_degree <= 1) return 0.0;
  const ConflictGraph g = build_conflict_graph(plan, profile.num_layers);
  return comm_time(color_comm_rounds(g), plan, profile);
}

}  // namespace odyssey
