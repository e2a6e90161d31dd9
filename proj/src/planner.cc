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

#include "odyssey/planner.h"

#include <algorithm>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "odyssey/estimator.h"

namespace odyssey {

std::vector<std::string> validate_search_config(const SearchConfig& cfg) {
  std::vector<std::string> out;
  if (cfg.dp_range.lo < 1 || cfg.dp_range.hi < cfg.dp_range.lo) {
    out.push_back(fmt::format("dp_range [{},{}] is empty or below 1", cfg.dp_range.lo,
                              cfg.dp_range.hi));
  }
  if (cfg.pp_range.lo < 1 || cfg.pp_range.hi < cfg.pp_range.lo) {
    out.push_back(fmt::format("pp_range [{},{}] is empty or below 1", cfg.pp_range.lo,
                              cfg.pp_range.hi));
  }
  if (cfg.max_faults_lookahead < 1) out.emplace_back("max_faults_lookahead must be >= 1");
  if (!(cfg.expected_residence_seconds > 0)) {
    out.emplace_back("expected_residence_seconds must be > 0");
  }
  return out;
}

SearchConfig default_search_config(const ExecutionPlan& current,
                                   Seconds expected_residence_seconds) {
  const auto& counts = current.parallel.stage_counts;
  const int dp = std::max(1, current.parallel.dp_degree);
  int pp_min = 1;
  int pp_max = 1;
  if (!counts.empty()) {
    pp_min = *std::min_element(counts.begin(), counts.end());
    pp_max = *std::max_element(counts.begin(), counts.end());
  }
  SearchConfig cfg;
  cfg.dp_range = {std::max(1, dp - 2), dp + 2};
  cfg.pp_range = {std::max(1, pp_min - 2), pp_max + 2};
  cfg.expected_residence_seconds = expected_residence_seconds;
  return cfg;
}

SearchConfig resolve_search_config(const SearchOverrides& overrides,
                                   const ExecutionPlan& current,
                                   Seconds default_residence_seconds) {
  SearchConfig cfg = default_search_config(
      current, overrides.expected_residence_seconds.value_or(default_residence_seconds));
  if (overrides.dp_range) cfg.dp_range = *overrides.dp_range;
  if (overrides.pp_range) cfg.pp_range = *overrides.pp_range;
  if (overrides.max_faults_lookahead) cfg.max_faults_lookahead = *overrides.max_faults_lookahead;
  return cfg;
}

namespace {

void partition_into(int remaining, int parts, int min_value, IntRange range,
                    std::vector<int>& prefix, std::vector<std::vector<int>>& out) {
  if (parts == 0) {
    if (remaining == 0) out.push_back(prefix);
    return;
  }
  for (int v = std::max(min_value, range.lo); v <= range.hi; ++v) {
    // the remaining parts are all >= v
    if (static_cast<long>(v) * parts > remaining) break;
    if (static_cast<long>(range.hi) * parts < remaining) break;
    prefix.push_back(v);
    partition_into(remaining - v, parts - 1, v, range, prefix, out);
    prefix.pop_back();
  }
}

}  // namespace

std::vector<std::vector<int>> integer_partition(int n_nodes, int dp, IntRange pp_range) {
  std::vector<std::vector<int>> out;
  if (dp < 1 || n_nodes < dp) return out;
  std::vector<int> prefix;
  partition_into(n_nodes, dp, pp_range.lo, pp_range, prefix, out);
  return out;
}

std::vector<ParallelCandidate> get_parallel_strategy(int n_nodes, int max_faults,
                                                     IntRange dp_range,
                                                     IntRange pp_range) {
  if (max_faults < 1 || n_nodes <= max_faults) {
    throw std::invalid_argument(fmt::format(
        "get_parallel_strategy needs n_nodes > max_faults >= 1, got {} and {}",
        n_nodes, max_faults));
  }
  std::vector<ParallelCandidate> out;
  std::set<std::pair<int, std::vector<int>>> seen;
  for (int i = 1; i <= max_faults; ++i) {
    for (int dp = dp_range.lo; dp <= dp_range.hi; ++dp) {
      for (auto& counts : integer_partition(n_nodes - i, dp, pp_range)) {
        if (seen.emplace(dp, counts).second) out.push_back({dp, std::move(counts)});
      }
    }
  }
  return out;
}

BatchDistribution distribute_batch(int n_micro, const std::vector<int>& stage_counts) {
  const int pipelines = static_cast<int>(stage_counts.size());
  BatchDistribution out;
  out.counts.assign(pipelines, 0);
  if (pipelines == 0) return out;
  long total_nodes = 0;
  for (int c : stage_counts) total_nodes += c;

  int assigned = 0;
  for (int p = 0; p < pipelines; ++p) {
    out.counts[p] = static_cast<int>(static_cast<long>(n_micro) * stage_counts[p] / total_nodes);
    assigned += out.counts[p];
  }
  // Remainder goes one at a time to the pipeline with the most nodes per
  // assigned micro-batch.
  auto ratio_greater = [&](int a, int b) {
    const long lhs = static_cast<long>(stage_counts[a]) * out.counts[b];
    const long rhs = static_cast<long>(stage_counts[b]) * out.counts[a];
    if (out.counts[a] == 0 || out.counts[b] == 0) {
      if (out.counts[a] == 0 && out.counts[b] == 0) return false;
      return out.counts[a] == 0;
    }
    return lhs > rhs;
  };
  for (; assigned < n_micro; ++assigned) {
    int best = 0;
    for (int p = 1; p < pipelines; ++p) {
      if (ratio_greater(p, best)) best = p;
    }
    ++out.counts[best];
  }
  if (n_micro >= pipelines) {
    for (int p = 0; p < pipelines; ++p) {
      if (out.counts[p] != 0) continue;
      const auto largest = std::max_element(out.counts.begin(), out.counts.end());
      --*largest;
      ++out.counts[p];
    }
  }
  out.degraded = std::find(out.counts.begin(), out.counts.end(), 0) != out.counts.end();
  return out;
}

std::vector<std::vector<int>> layer_split_candidates(int stage_count, int num_layers) {
  std::vector<std::vector<int>> out;
  if (stage_count < 1 || num_layers < stage_count) return out;
  const int base = num_layers / stage_count;
  const int extra = num_layers % stage_count;
  // choose which stages get the extra layer
  std::vector<char> mask(stage_count, 0);
  std::fill(mask.begin(), mask.begin() + extra, 1);
  do {
    std::vector<int> sizes(stage_count, base);
    for (int s = 0; s < stage_count; ++s) sizes[s] += mask[s];
    out.push_back(std::move(sizes));
  } while (std::prev_permutation(mask.begin(), mask.end()));
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

std::vector<LayerRange> to_intervals(const std::vector<int>& sizes) {
  std::vector<LayerRange> out;
  int begin = 0;
  for (int n : sizes) {
    out.push_back({begin, begin + n});
    begin += n;
  }
  return out;
}

}  // namespace

std::vector<LayerRange> split_layers(int stage_count, int num_layers,
                                     const Profile& profile, int n_micro) {
  const auto candidates = layer_split_candidates(stage_count, num_layers);
  if (candidates.empty()) {
    throw InfeasibleError(fmt::format("cannot split {} layers over {} stages",
                                      num_layers, stage_count));
  }
  std::optional<std::vector<LayerRange>> best;
  Seconds best_time = std::numeric_limits<Seconds>::infinity();
  Bytes smallest_peak = std::numeric_limits<Bytes>::max();
  for (const auto& sizes : candidates) {
    Bytes worst = 0;
    for (int s = 0; s < stage_count; ++s) {
      worst = std::max(worst, peak_memory(s, sizes[s], stage_count, profile));
    }
    smallest_peak = std::min(smallest_peak, worst);
    if (worst > profile.device_memory_limit) continue;
    auto intervals = to_intervals(sizes);
    const Seconds t =
        n_micro > 0 ? simulate_pipeline_1f1b(stage_times(intervals, profile), n_micro).makespan
                    : 0.0;
    if (t < best_time) {
      best_time = t;
      best = std::move(intervals);
    }
  }
  if (!best) {
    throw InfeasibleError(fmt::format(
        "every split of {} layers over {} stages exceeds device memory: "
        "smallest peak {} bytes > limit {} bytes",
        num_layers, stage_count, smallest_peak, profile.device_memory_limit));
  }
  return *best;
}

std::vector<EvaluatedPlan> enumerate_execution_plans(
    const ClusterState& state, const Profile& profile, const SearchConfig& cfg,
    std::vector<std::string>* rejections) {
  const int available = state.surviving_nodes();
  if (available < 1) throw InfeasibleError("no surviving nodes");
  const int n_micro = state.micro_batches();
  const int lookahead = std::min(cfg.max_faults_lookahead, available);
  const auto candidates =
      get_parallel_strategy(available + 1, lookahead, cfg.dp_range, cfg.pp_range);

  std::map<std::pair<int, int>, std::optional<std::vector<LayerRange>>> splits;
  auto split_for = [&](int stages, int micro) -> const std::optional<std::vector<LayerRange>>& {
    auto [it, inserted] = splits.try_emplace({stages, micro});
    if (inserted) {
      try {
        it->second = split_layers(stages, profile.num_layers, profile, micro);
      } catch (const InfeasibleError& e) {
        it->second.reset();
        if (rejections) rejections->emplace_back(e.what());
      }
    }
    return it->second;
  };

  std::vector<EvaluatedPlan> out;
  for (const auto& c : candidates) {
    if (cfg.symmetric_only &&
        std::adjacent_find(c.stage_counts.begin(), c.stage_counts.end(),
                           std::not_equal_to<>()) != c.stage_counts.end()) {
      continue;
    }
    ExecutionPlan plan;
    plan.policy = Policy::kDynamicParallelism;
    plan.parallel = {c.dp, c.stage_counts};
    plan.batch_assignment = distribute_batch(n_micro, c.stage_counts).counts;
    bool feasible = true;
    for (int p = 0; p < c.dp && feasible; ++p) {
      const auto& split = split_for(c.stage_counts[p], plan.batch_assignment[p]);
      if (!split) {
        feasible = false;
      } else {
        plan.layer_assignment.push_back(*split);
      }
    }
    if (!feasible) continue;
    const Seconds step = step_time_asymmetric(plan, profile);
    out.push_back({std::move(plan), step});
  }
  return out;
}

SurvivorLayout survivor_layout(const ClusterState& state) {
  SurvivorLayout out;
  for (int node = 0; node < state.total_nodes; ++node) {
    if (state.is_failed(node)) continue;
    out.nodes.push_back(node);
    const SlotCoord c = state.current_plan.slot_coord(state.slot_of(node));
    out.layers.push_back(c.stage >= 0
                             ? to_layer_set(state.current_plan.layers_at(c.pipeline, c.stage))
                             : LayerSet{});
  }
  return out;
}

namespace {

struct Ranked {
  Seconds step;
  Seconds transition;
  std::string summary;
  std::size_t index;
  auto key() const { return std::tie(step, transition, summary); }
};

}  // namespace

ExecutionPlan get_execution_plan(const ClusterState& state, const Profile& profile,
                                 const SearchConfig& cfg) {
  std::vector<std::string> rejections;
  const auto plans = enumerate_execution_plans(state, profile, cfg, &rejections);
  if (plans.empty()) {
    std::string msg = fmt::format(
        "no memory-feasible plan for {} surviving nodes (dp {}..{}, pp {}..{}, "
        "device limit {} bytes)",
        state.surviving_nodes(), cfg.dp_range.lo, cfg.dp_range.hi, cfg.pp_range.lo,
        cfg.pp_range.hi, profile.device_memory_limit);
    for (const auto& r : rejections) msg += "\n  " + r;
    throw InfeasibleError(msg);
  }
  Seconds best_step = std::numeric_limits<Seconds>::infinity();
  for (const auto& e : plans) best_step = std::min(best_step, e.step_seconds);

  // Transition cost only matters among step-time ties.
  const SurvivorLayout layout = survivor_layout(state);
  std::optional<Ranked> best;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    if (plans[i].step_seconds != best_step) continue;
    const auto transfer = plan_weight_transfer(layout.layers, plans[i].plan, profile);
    Ranked r{plans[i].step_seconds,
             transition_time(state.current_plan, plans[i].plan, profile,
                             transfer.transfer_seconds),
             plan_summary(plans[i].plan), i};
    if (!best || r.key() < best->key()) best = std::move(r);
  }
  return plans[best->index].plan;
}

double effective_throughput(int global_batch_size, Seconds step_seconds,
                            Seconds transition_seconds, Seconds expected_residence) {
  return global_batch_size / step_seconds * expected_residence /
         (transition_seconds + expected_residence);
}

namespace {

struct Option {
  ExecutionPlan plan;
  Seconds step = 0.0;
  Seconds transition = 0.0;
  double objective = 0.0;
  std::vector<int> node_slots;
  TransferAssignment transfer;
};

bool better(const Option& a, const Option& b) {
  if (a.objective != b.objective) return a.objective > b.objective;
  if (a.transition != b.transition) return a.transition < b.transition;
  return plan_summary(a.plan) < plan_summary(b.plan);
}

}  // namespace

PlanDecision decide_plan(const ClusterState& state, const Profile& profile,
                         const SearchConfig& cfg, SelectionMode mode) {
  const int batch = state.global_batch_size;
  const Seconds residence = cfg.expected_residence_seconds;
  const ExecutionPlan& current = state.current_plan;
  const std::vector<int> current_slots =
      state.node_slots.empty() ? identity_slots(state.total_nodes, current)
                               : state.node_slots;

  std::vector<int> observed = state.observed_failures();
  std::vector<int> absorbed = current.failure_distribution;
  const std::size_t width = std::max(observed.size(), absorbed.size());
  observed.resize(width, 0);
  absorbed.resize(width, 0);

  PlanDecision decision;
  if (observed == absorbed) {
    decision.chosen = current;
    decision.retained = true;
    decision.estimated_step_seconds = plan_step_time(current, profile);
    decision.objective_value =
        effective_throughput(batch, decision.estimated_step_seconds, 0.0, residence);
    decision.node_slots = current_slots;
    return decision;
  }

  std::optional<Option> reroute;
  std::string reroute_reason;
  if (mode != SelectionMode::kAlwaysReconfigure) {
    const int n_dp = current.parallel.dp_degree;
    const bool uniform = current.has_uniform_layout();
    const bool survivors_everywhere =
        std::all_of(observed.begin(), observed.end(), [n_dp](int f) { return f < n_dp; });
    const auto oom = memory_violations(current, profile);
    if (uniform && survivors_everywhere && oom.empty()) {
      Option o;
      o.plan = current;
      o.plan.policy = Policy::kDataRerouting;
      o.plan.failure_distribution = observed;
      o.plan.failure_distribution.resize(current.parallel.stage_counts.front(), 0);
      o.step = plan_step_time(o.plan, profile);
      o.transition = transition_time(current, o.plan, profile, 0.0);
      o.objective = effective_throughput(batch, o.step, o.transition, residence);
      o.node_slots = current_slots;
      reroute = std::move(o);
    } else {
      if (!uniform) {
        reroute_reason = "pipelines have different layouts";
      } else if (!survivors_everywhere) {
        reroute_reason = "a stage has no surviving data-parallel peer";
      } else {
        reroute_reason = fmt::format(
            "pipeline {} stage {} needs {} bytes > limit {} bytes", oom.front().pipeline,
            oom.front().stage, oom.front().peak, profile.device_memory_limit);
      }
    }
  }

  std::optional<Option> dynamic;
  std::string dynamic_reason;
  const bool want_dynamic = mode != SelectionMode::kPreferRerouting || !reroute;
  if (want_dynamic) {
    try {
      Option o;
      o.plan = get_execution_plan(state, profile, cfg);
      const SurvivorLayout layout = survivor_layout(state);
      o.transfer = plan_weight_transfer(layout.layers, o.plan, profile);
      o.step = plan_step_time(o.plan, profile);
      o.transition = transition_time(current, o.plan, profile, o.transfer.transfer_seconds);
      o.objective = effective_throughput(batch, o.step, o.transition, residence);
      o.node_slots.assign(state.total_nodes, -1);
      for (std::size_t i = 0; i < layout.nodes.size(); ++i) {
        const int slot = o.transfer.slot_of_node[i];
        if (slot < o.plan.num_slots()) o.node_slots[layout.nodes[i]] = slot;
      }
      dynamic = std::move(o);
    } catch (const InfeasibleError& e) {
      dynamic_reason = e.what();
    }
  }

  if (!reroute && !dynamic) {
    std::string msg = "no feasible recovery plan";
    if (!reroute_reason.empty()) msg += "; rerouting: " + reroute_reason;
    if (!dynamic_reason.empty()) msg += "; reconfiguration: " + dynamic_reason;
    throw InfeasibleError(msg);
  }

  Option* chosen = nullptr;
  Option* other = nullptr;
  if (reroute && dynamic) {
    const bool take_reroute = better(*reroute, *dynamic);
    chosen = take_reroute ? &*reroute : &*dynamic;
    other = take_reroute ? &*dynamic : &*reroute;
  } else {
    chosen = reroute ? &*reroute : &*dynamic;
  }

  decision.forced = mode != SelectionMode::kAlwaysReconfigure && !reroute;
  decision.chosen = chosen->plan;
  decision.objective_value = chosen->objective;
  decision.estimated_step_seconds = chosen->step;
  decision.estimated_transition_seconds = chosen->transition;
  decision.node_slots = chosen->node_slots;
  decision.transfer = chosen->transfer;
  if (other) decision.rejected_alternatives.push_back({plan_summary(other->plan), other->objective});
  return decision;
}

}  // namespace odyssey
