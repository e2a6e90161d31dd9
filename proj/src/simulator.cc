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

#include "odyssey/simulator.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "odyssey/estimator.h"

namespace odyssey {

const char* sim_policy_name(SimPolicy policy) {
  switch (policy) {
    case SimPolicy::kAdaptive:
      return "Adaptive";
    case SimPolicy::kAlwaysReroute:
      return "AlwaysReroute";
    case SimPolicy::kAlwaysReconfigure:
      return "AlwaysReconfigure";
  }
  return "?";
}

SimPolicy parse_sim_policy(const std::string& name) {
  for (SimPolicy p : kAllSimPolicies) {
    if (name == sim_policy_name(p)) return p;
  }
  throw InputError("unknown simulation policy '" + name + "'");
}

const char* event_kind_name(EventKind kind) {
  switch (kind) {
    case EventKind::kFault:
      return "fault";
    case EventKind::kPlanSwitch:
      return "plan_switch";
    case EventKind::kIntervalSummary:
      return "interval_summary";
  }
  return "?";
}

std::vector<std::string> validate_scenario(const Scenario& s, const Profile& profile) {
  std::vector<std::string> out;
  if (!(s.duration_seconds > 0)) out.emplace_back("duration_seconds must be > 0");
  if (s.n_nodes_initial < 1) out.emplace_back("n_nodes_initial must be >= 1");
  if (!(s.per_node_failure_rate >= 0) || !std::isfinite(s.per_node_failure_rate)) {
    out.emplace_back("per_node_failure_rate must be finite and >= 0");
  }
  if (s.global_batch_size <= 0 || s.micro_batch_size <= 0 ||
      s.global_batch_size % s.micro_batch_size != 0) {
    out.emplace_back("global_batch_size must be a positive multiple of micro_batch_size");
  }
  if (s.initial_dp < 1 || s.initial_pp < 1) {
    out.emplace_back("initial_dp and initial_pp must be >= 1");
  } else if (static_cast<long>(s.initial_dp) * s.initial_pp > s.n_nodes_initial) {
    out.push_back(fmt::format("initial plan needs {} nodes but only {} exist",
                              s.initial_dp * s.initial_pp, s.n_nodes_initial));
  } else if (s.initial_pp > profile.num_layers) {
    out.emplace_back("initial_pp exceeds the number of layers");
  }
  auto check_range = [&out](const char* name, const std::optional<IntRange>& r) {
    if (r && (r->lo < 1 || r->hi < r->lo)) out.push_back(fmt::format("search.{} is empty", name));
  };
  check_range("dp_range", s.search.dp_range);
  check_range("pp_range", s.search.pp_range);
  if (s.search.max_faults_lookahead && *s.search.max_faults_lookahead < 1) {
    out.emplace_back("search.max_faults_lookahead must be >= 1");
  }
  if (s.search.expected_residence_seconds && !(*s.search.expected_residence_seconds > 0)) {
    out.emplace_back("search.expected_residence_seconds must be > 0");
  }
  return out;
}

ExecutionPlan initial_plan(const Scenario& s, const Profile& profile) {
  ExecutionPlan plan;
  plan.policy = Policy::kDynamicParallelism;
  plan.parallel = {s.initial_dp, std::vector<int>(s.initial_dp, s.initial_pp)};
  const int n_micro = s.global_batch_size / s.micro_batch_size;
  plan.batch_assignment = distribute_batch(n_micro, plan.parallel.stage_counts).counts;
  // one split shared by every pipeline so that rerouting stays possible
  const auto layers =
      split_layers(s.initial_pp, profile.num_layers, profile, plan.max_micro_batches());
  plan.layer_assignment.assign(s.initial_dp, layers);
  return plan;
}

std::vector<Seconds> draw_failure_times(std::uint64_t seed, int n_nodes,
                                        double per_node_failure_rate) {
  std::vector<Seconds> times(n_nodes, std::numeric_limits<Seconds>::infinity());
  if (per_node_failure_rate <= 0) return times;
  const double rate_per_second = per_node_failure_rate / 3600.0;
  std::mt19937_64 rng(seed);
  for (int n = 0; n < n_nodes; ++n) {
    // 53-bit uniform in [0,1); inverse CDF of the exponential law
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    times[n] = -std::log1p(-u) / rate_per_second;
  }
  return times;
}

namespace {

class Recorder {
 public:
  explicit Recorder(SimTrace& trace) : trace_(trace) {}

  void open(Seconds start, double throughput, int active, std::string label) {
    start_ = start;
    throughput_ = throughput;
    active_ = active;
    label_ = std::move(label);
  }

  void close(Seconds end) {
    if (end <= start_) return;
    trace_.intervals.push_back({start_, end, throughput_, active_, label_});
    trace_.events.push_back(
        {end, EventKind::kIntervalSummary,
         fmt::format("[{}, {}) {} samples/s over {} nodes ({})", start_, end, throughput_,
                     active_, label_)});
    start_ = end;
  }

 private:
  SimTrace& trace_;
  Seconds start_ = 0.0;
  double throughput_ = 0.0;
  int active_ = 0;
  std::string label_;
};

SearchConfig widen(SearchConfig cfg, int available, const Profile& profile) {
  cfg.dp_range = {1, std::max(1, available)};
  cfg.pp_range = {1, std::max(1, std::min(available, profile.num_layers))};
  return cfg;
}

PlanDecision decide_for(SimPolicy policy, const ClusterState& state, const Profile& profile,
                        const Scenario& scenario, Seconds residence) {
  const int available = state.surviving_nodes();
  if (policy == SimPolicy::kAlwaysReconfigure) {
    // predefined symmetric templates of 2, 3 or 4 stages; idle nodes allowed
    SearchConfig cfg;
    cfg.dp_range = {1, std::max(1, available)};
    cfg.pp_range = {2, 4};
    cfg.max_faults_lookahead = 4;
    cfg.symmetric_only = true;
    cfg.expected_residence_seconds = residence;
    return decide_plan(state, profile, cfg, SelectionMode::kAlwaysReconfigure);
  }
  const SelectionMode mode = policy == SimPolicy::kAdaptive ? SelectionMode::kAdaptive
                                                            : SelectionMode::kPreferRerouting;
  const SearchConfig cfg =
      resolve_search_config(scenario.search, state.current_plan, residence);
  try {
    return decide_plan(state, profile, cfg, mode);
  } catch (const InfeasibleError& e) {
    if (scenario.search.dp_range || scenario.search.pp_range) throw;
    spdlog::debug("widening search after: {}", e.what());
    return decide_plan(state, profile, widen(cfg, available, profile), mode);
  }
}

}  // namespace

SimTrace run_simulation(const Scenario& scenario, const Profile& profile) {
  SimTrace trace;
  trace.policy = scenario.policy;
  trace.seed = scenario.seed;

  ClusterState state;
  state.total_nodes = scenario.n_nodes_initial;
  state.global_batch_size = scenario.global_batch_size;
  state.micro_batch_size = scenario.micro_batch_size;
  state.current_plan = initial_plan(scenario, profile);
  state.node_slots = identity_slots(state.total_nodes, state.current_plan);

  const double batch = scenario.global_batch_size;
  Seconds step = plan_step_time(state.current_plan, profile);
  Recorder rec(trace);
  rec.open(0.0, batch / step, state.surviving_nodes(), "initial");
  trace.plans.push_back({0.0, state, step, 0});
  trace.events.push_back({0.0, EventKind::kPlanSwitch,
                          "initial " + plan_summary(state.current_plan)});

  const auto failure_times = draw_failure_times(scenario.seed, scenario.n_nodes_initial,
                                                scenario.per_node_failure_rate);
  std::vector<int> order(failure_times.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return failure_times[a] < failure_times[b]; });

  const double rate_per_second = scenario.per_node_failure_rate / 3600.0;
  const Seconds end = scenario.duration_seconds;
  Seconds busy_until = 0.0;
  trace.total_time = end;

  for (int node : order) {
    // a fault arriving mid-transition is handled once the transition ends
    const Seconds when = std::max(failure_times[node], busy_until);
    if (!(when < end)) break;
    rec.close(when);

    const SlotCoord coord = state.current_plan.slot_coord(state.slot_of(node));
    state.failed_nodes.push_back({node, coord.pipeline, coord.stage});
    trace.events.push_back({when, EventKind::kFault,
                            fmt::format("node {} at ({},{})", node, coord.pipeline,
                                        coord.stage)});
    if (state.surviving_nodes() < 1) {
      trace.ended_early = true;
      trace.total_time = when;
      break;
    }

    const Seconds residence = 1.0 / (rate_per_second * state.surviving_nodes());
    PlanDecision d;
    try {
      d = decide_for(scenario.policy, state, profile, scenario, residence);
    } catch (const InfeasibleError& e) {
      spdlog::info("{} seed {}: stopping at t={}: {}", sim_policy_name(scenario.policy),
                   scenario.seed, when, e.what());
      trace.ended_early = true;
      trace.total_time = when;
      break;
    }

    if (d.retained) {
      rec.open(when, batch / d.estimated_step_seconds, state.surviving_nodes(),
               policy_name(state.current_plan.policy));
      continue;
    }

    state.current_plan = d.chosen;
    state.node_slots = d.node_slots;
    const Seconds transition = d.estimated_transition_seconds;
    trace.events.push_back(
        {when, EventKind::kPlanSwitch,
         fmt::format("{}{} transition={}s step={}s", d.forced ? "forced " : "",
                     plan_summary(d.chosen), transition, d.estimated_step_seconds)});
    const Seconds resume = std::min(when + transition, end);
    if (transition > 0) {
      rec.open(when, 0.0, state.surviving_nodes(), "transition");
      rec.close(resume);
      busy_until = when + transition;
    }
    rec.open(resume, batch / d.estimated_step_seconds, state.surviving_nodes(),
             policy_name(d.chosen.policy));
    trace.plans.push_back({resume, state, d.estimated_step_seconds,
                           static_cast<int>(state.failed_nodes.size())});
  }
  rec.close(trace.total_time);

  for (const auto& iv : trace.intervals) {
    trace.total_samples += iv.throughput * (iv.end - iv.start);
  }
  trace.average_throughput =
      trace.total_time > 0 ? trace.total_samples / trace.total_time : 0.0;
  return trace;
}

namespace {

RatioStats ratio_stats(std::vector<double> values) {
  RatioStats r;
  r.per_seed = std::move(values);
  if (r.per_seed.empty()) return r;
  r.min = *std::min_element(r.per_seed.begin(), r.per_seed.end());
  r.max = *std::max_element(r.per_seed.begin(), r.per_seed.end());
  r.mean = std::accumulate(r.per_seed.begin(), r.per_seed.end(), 0.0) / r.per_seed.size();
  return r;
}

}  // namespace

PolicyComparison compare_policies(const Scenario& scenario, const Profile& profile,
                                  const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw std::invalid_argument("compare_policies needs at least one seed");
  PolicyComparison out;
  out.seeds = seeds;
  constexpr std::size_t kPolicies = std::size(kAllSimPolicies);
  out.traces.assign(kPolicies, {});
  out.mean_throughput.assign(kPolicies, 0.0);
  for (std::size_t p = 0; p < kPolicies; ++p) {
    for (std::uint64_t seed : seeds) {
      Scenario s = scenario;
      s.policy = kAllSimPolicies[p];
      s.seed = seed;
      out.traces[p].push_back(run_simulation(s, profile));
      out.mean_throughput[p] += out.traces[p].back().average_throughput / seeds.size();
    }
  }
  std::vector<double> ar, ac, rc;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const double a = out.traces[0][i].average_throughput;
    const double r = out.traces[1][i].average_throughput;
    const double c = out.traces[2][i].average_throughput;
    ar.push_back(a / r);
    ac.push_back(a / c);
    rc.push_back(r / c);
  }
  out.adaptive_over_reroute = ratio_stats(std::move(ar));
  out.adaptive_over_reconfigure = ratio_stats(std::move(ac));
  out.reroute_over_reconfigure = ratio_stats(std::move(rc));
  return out;
}

std::string trace_csv(const SimTrace& trace) {
  std::string out = "time_seconds,active_nodes,throughput,policy_event\n";
  for (const auto& iv : trace.intervals) {
    out += fmt::format("{},{},{},{}\n", iv.start, iv.active_nodes, iv.throughput, iv.label);
  }
  const int active = trace.intervals.empty() ? 0 : trace.intervals.back().active_nodes;
  out += fmt::format("{},{},{},{}\n", trace.total_time, active, 0.0,
                     trace.ended_early ? "stopped" : "end");
  return out;
}

}  // namespace odyssey
