#pragma once

#include "cgseg/camera.hpp"

#include <json.hpp>

#include <filesystem>
#include <vector>

namespace cgseg::io {

/// JSON array of {width, height, fx, fy, cx, cy, world_to_camera: 16 numbers, row-major}.
std::vector<Camera> load_cameras(const std::filesystem::path& path);
void save_cameras(const std::vector<Camera>& cameras, const std::filesystem::path& path);

Camera camera_from_json(const nlohmann::json& j);
nlohmann::json camera_to_json(const Camera& camera);

} // namespace cgseg::io
