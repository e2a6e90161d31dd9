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

#include "odyssey/io.h"

#include <fstream>
#include <initializer_list>
#include <limits>
#include <set>
#include <sstream>

#include <fmt/format.h>

namespace odyssey {

namespace {

// Strict view over one JSON object.
class Fields {
 public:
  Fields(const Json& j, std::string where, std::initializer_list<const char*> allowed)
      : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw InputError(where_ + " must be a JSON object");
    std::set<std::string> keys(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items()) {
      if (!keys.count(key)) throw InputError(fmt::format("{}: unknown key '{}'", where_, key));
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  const Json& raw(const char* key) const {
    if (!j_.contains(key)) throw InputError(fmt::format("{}: missing key '{}'", where_, key));
    return j_.at(key);
  }

  std::int64_t integer(const char* key) const { return as_integer(raw(key), key); }

  int count(const char* key) const {
    const std::int64_t v = integer(key);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
      throw InputError(fmt::format("{}.{} out of range", where_, key));
    }
    return static_cast<int>(v);
  }

  double number(const char* key) const {
    const Json& v = raw(key);
    if (!v.is_number()) throw InputError(fmt::format("{}.{} must be a number", where_, key));
    return v.get<double>();
  }

  std::string text(const char* key) const {
    const Json& v = raw(key);
    if (!v.is_string()) throw InputError(fmt::format("{}.{} must be a string", where_, key));
    return v.get<std::string>();
  }

  std::vector<int> counts(const char* key) const {
    const Json& v = raw(key);
    if (!v.is_array()) throw InputError(fmt::format("{}.{} must be an array", where_, key));
    std::vector<int> out;
    for (const Json& e : v) out.push_back(static_cast<int>(as_integer(e, key)));
    return out;
  }

  std::int64_t as_integer(const Json& v, const char* key) const {
    if (!v.is_number_integer()) {
      throw InputError(fmt::format("{}.{} must be an integer", where_, key));
    }
    return v.get<std::int64_t>();
  }

  const std::string& where() const { return where_; }

 private:
  const Json& j_;
  std::string where_;
};

IntRange range_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() ||
      !j[1].is_number_integer()) {
    throw InputError(where + " must be an array [lo, hi] of two integers");
  }
  return {j[0].get<int>(), j[1].get<int>()};
}

}  // namespace

Profile profile_from_json(const Json& j) {
  Fields f(j, "profile",
           {"t_forward_per_layer", "t_backward_per_layer", "mem_params_per_layer",
            "mem_optimizer_per_layer", "mem_grads_per_layer",
            "mem_activation_per_layer_per_microbatch", "weight_bytes_per_layer",
            "link_bandwidth", "allreduce_time_per_layer", "restart_overhead",
            "device_memory_limit", "num_layers"});
  Profile p;
  p.t_forward_per_layer = f.number("t_forward_per_layer");
  p.t_backward_per_layer = f.number("t_backward_per_layer");
  p.mem_params_per_layer = f.integer("mem_params_per_layer");
  p.mem_optimizer_per_layer = f.integer("mem_optimizer_per_layer");
  p.mem_grads_per_layer = f.integer("mem_grads_per_layer");
  p.mem_activation_per_layer_per_microbatch =
      f.integer("mem_activation_per_layer_per_microbatch");
  p.weight_bytes_per_layer = f.integer("weight_bytes_per_layer");
  p.link_bandwidth = f.number("link_bandwidth");
  p.allreduce_time_per_layer = f.number("allreduce_time_per_layer");
  p.restart_overhead = f.number("restart_overhead");
  p.device_memory_limit = f.integer("device_memory_limit");
  p.num_layers = f.count("num_layers");
  return p;
}

Json to_json(const Profile& p) {
  return Json{{"t_forward_per_layer", p.t_forward_per_layer},
              {"t_backward_per_layer", p.t_backward_per_layer},
              {"mem_params_per_layer", p.mem_params_per_layer},
              {"mem_optimizer_per_layer", p.mem_optimizer_per_layer},
              {"mem_grads_per_layer", p.mem_grads_per_layer},
              {"mem_activation_per_layer_per_microbatch",
               p.mem_activation_per_layer_per_microbatch},
              {"weight_bytes_per_layer", p.weight_bytes_per_layer},
              {"link_bandwidth", p.link_bandwidth},
              {"allreduce_time_per_layer", p.allreduce_time_per_layer},
              {"restart_overhead", p.restart_overhead},
              {"device_memory_limit", p.device_memory_limit},
              {"num_layers", p.num_layers}};
}

ExecutionPlan plan_from_json(const Json& j) {
  Fields f(j, "plan",
           {"policy", "dp_degree", "stage_counts", "layer_assignment", "batch_assignment",
            "failure_distribution"});
  ExecutionPlan plan;
  plan.policy = parse_policy(f.text("policy"));
  plan.parallel.dp_degree = f.count("dp_degree");
  plan.parallel.stage_counts = f.counts("stage_counts");
  const Json& layers = f.raw("layer_assignment");
  if (!layers.is_array()) throw InputError("plan.layer_assignment must be an array");
  for (const Json& pipeline : layers) {
    if (!pipeline.is_array()) {
      throw InputError("plan.layer_assignment entries must be arrays of [begin, end)");
    }
    std::vector<LayerRange> stages;
    for (const Json& r : pipeline) {
      const IntRange ends = range_from_json(r, "plan.layer_assignment interval");
      stages.push_back({ends.lo, ends.hi});
    }
    plan.layer_assignment.push_back(std::move(stages));
  }
  plan.batch_assignment = f.counts("batch_assignment");
  if (f.has("failure_distribution")) plan.failure_distribution = f.counts("failure_distribution");
  return plan;
}

Json to_json(const ExecutionPlan& plan) {
  Json layers = Json::array();
  for (const auto& pipeline : plan.layer_assignment) {
    Json stages = Json::array();
    for (const LayerRange& r : pipeline) stages.push_back({r.begin, r.end});
    layers.push_back(std::move(stages));
  }
  return Json{{"policy", policy_name(plan.policy)},
              {"dp_degree", plan.parallel.dp_degree},
              {"stage_counts", plan.parallel.stage_counts},
              {"layer_assignment", std::move(layers)},
              {"batch_assignment", plan.batch_assignment},
              {"failure_distribution", plan.failure_distribution}};
}

ClusterState state_from_json(const Json& j) {
  Fields f(j, "state",
           {"total_nodes", "failed_nodes", "current_plan", "global_batch_size",
            "micro_batch_size", "node_slots"});
  ClusterState s;
  s.total_nodes = f.count("total_nodes");
  const Json& failed = f.raw("failed_nodes");
  if (!failed.is_array()) throw InputError("state.failed_nodes must be an array");
  for (const Json& e : failed) {
    Fields n(e, "state.failed_nodes[]", {"node", "pipeline", "stage"});
    s.failed_nodes.push_back({n.count("node"), n.has("pipeline") ? n.count("pipeline") : -1,
                              n.has("stage") ? n.count("stage") : -1});
  }
  s.current_plan = plan_from_json(f.raw("current_plan"));
  s.global_batch_size = f.count("global_batch_size");
  s.micro_batch_size = f.count("micro_batch_size");
  if (f.has("node_slots")) s.node_slots = f.counts("node_slots");
  return s;
}

Json to_json(const ClusterState& s) {
  Json failed = Json::array();
  for (const auto& n : s.failed_nodes) {
    failed.push_back(Json{{"node", n.node}, {"pipeline", n.pipeline}, {"stage", n.stage}});
  }
  return Json{{"total_nodes", s.total_nodes},
              {"failed_nodes", std::move(failed)},
              {"current_plan", to_json(s.current_plan)},
              {"global_batch_size", s.global_batch_size},
              {"micro_batch_size", s.micro_batch_size},
              {"node_slots", s.node_slots}};
}

SearchOverrides search_from_json(const Json& j) {
  Fields f(j, "search",
           {"dp_range", "pp_range", "max_faults_lookahead", "expected_residence_seconds"});
  SearchOverrides s;
  if (f.has("dp_range")) s.dp_range = range_from_json(f.raw("dp_range"), "search.dp_range");
  if (f.has("pp_range")) s.pp_range = range_from_json(f.raw("pp_range"), "search.pp_range");
  if (f.has("max_faults_lookahead")) s.max_faults_lookahead = f.count("max_faults_lookahead");
  if (f.has("expected_residence_seconds")) {
    s.expected_residence_seconds = f.number("expected_residence_seconds");
  }
  return s;
}

Json to_json(const SearchOverrides& s) {
  Json j = Json::object();
  if (s.dp_range) j["dp_range"] = {s.dp_range->lo, s.dp_range->hi};
  if (s.pp_range) j["pp_range"] = {s.pp_range->lo, s.pp_range->hi};
  if (s.max_faults_lookahead) j["max_faults_lookahead"] = *s.max_faults_lookahead;
  if (s.expected_residence_seconds) {
    j["expected_residence_seconds"] = *s.expected_residence_seconds;
  }
  return j;
}

Scenario scenario_from_json(const Json& j) {
  Fields f(j, "scenario",
           {"duration_seconds", "n_nodes_initial", "per_node_failure_rate", "seed", "seeds",
            "global_batch_size", "micro_batch_size", "policy", "initial_dp", "initial_pp",
            "search"});
  Scenario s;
  s.duration_seconds = f.number("duration_seconds");
  s.n_nodes_initial = f.count("n_nodes_initial");
  s.per_node_failure_rate = f.number("per_node_failure_rate");
  auto seed_of = [&](const Json& v) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      throw InputError("scenario seeds must be non-negative integers");
    }
    return v.get<std::uint64_t>();
  };
  s.seed = seed_of(f.raw("seed"));
  if (f.has("seeds")) {
    const Json& seeds = f.raw("seeds");
    if (!seeds.is_array()) throw InputError("scenario.seeds must be an array");
    for (const Json& v : seeds) s.seeds.push_back(seed_of(v));
  }
  s.global_batch_size = f.count("global_batch_size");
  s.micro_batch_size = f.count("micro_batch_size");
  if (f.has("policy")) s.policy = parse_sim_policy(f.text("policy"));
  s.initial_dp = f.count("initial_dp");
  s.initial_pp = f.count("initial_pp");
  if (f.has("search")) s.search = search_from_json(f.raw("search"));
  return s;
}

Json to_json(const Scenario& s) {
  return Json{{"duration_seconds", s.duration_seconds},
              {"n_nodes_initial", s.n_nodes_initial},
              {"per_node_failure_rate", s.per_node_failure_rate},
              {"seed", s.seed},
              {"seeds", s.seeds},
              {"global_batch_size", s.global_batch_size},
              {"micro_batch_size", s.micro_batch_size},
              {"policy", sim_policy_name(s.policy)},
              {"initial_dp", s.initial_dp},
              {"initial_pp", s.initial_pp},
              {"search", to_json(s.search)}};
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(fmt::format("cannot read {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

Json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw InputError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_text_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", tmp.string()));
    out << content;
    if (!out.flush()) throw std::runtime_error(fmt::format("cannot write {}", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

Profile load_profile(const std::filesystem::path& path) {
  Profile p = profile_from_json(read_json_file(path));
  const auto problems = validate_profile(p);
  if (!problems.empty()) {
    std::string msg = path.string() + ":";
    for (const auto& v : problems) msg += "\n  " + v;
    throw InputError(msg);
  }
  return p;
}

}  // namespace odyssey
