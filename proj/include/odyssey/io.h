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

#ifndef ODYSSEY_IO_H_
#define ODYSSEY_IO_H_

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "odyssey/domain.h"
#include "odyssey/planner.h"
#include "odyssey/simulator.h"

namespace odyssey {

using Json = nlohmann::ordered_json;

// Decoders reject unknown keys, missing keys and mistyped values with
// InputError. Encoders emit exactly the keys the decoders accept.

Profile profile_from_json(const Json& j);
Json to_json(const Profile& profile);

ExecutionPlan plan_from_json(const Json& j);
Json to_json(const ExecutionPlan& plan);

ClusterState state_from_json(const Json& j);
Json to_json(const ClusterState& state);

SearchOverrides search_from_json(const Json& j);
Json to_json(const SearchOverrides& search);

Scenario scenario_from_json(const Json& j);
Json to_json(const Scenario& scenario);

Json read_json_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);
/// Writes through a temporary file and renames it into place.
void write_text_file_atomic(const std::filesystem::path& path, const std::string& content);

Profile load_profile(const std::filesystem::path& path);

}  // namespace odyssey

#endif  // ODYSSEY_IO_H_
