#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "chunkgrpo/data.hpp"
#include "chunkgrpo/dynamics.hpp"
#include "chunkgrpo/grpo.hpp"
#include "chunkgrpo/sde.hpp"

namespace chunkgrpo {

using Json = nlohmann::json;

Json to_json(const ChunkPlan& plan);
ChunkPlan plan_from_json(const Json& j);

Json to_json(const DynamicsProfile& profile);
DynamicsProfile profile_from_json(const Json& j);

Json to_json(const InvarianceReport& report);

Json to_json(const Transition& tr);
Json to_json(const Trajectory& traj);
Json to_json(const TrajectoryGroup& group);

Json to_json(const DataSpec& data);

/// Pretty-printed with a trailing newline.
void write_json(const Json& j, const std::filesystem::path& path);
Json read_json(const std::filesystem::path& path);

}  // namespace chunkgrpo
