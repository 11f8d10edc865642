#pragma once

#include "cgseg/scene.hpp"

#include <filesystem>

namespace cgseg::io {

/// Reads a binary little-endian 3DGS PLY. Required vertex properties: x y z,
/// scale_0..2 (log), rot_0..3 (w x y z), opacity (logit), f_dc_0..2; optional
/// f_rest_* (9, 24 or 45 of them) selects SH degree 1..3.
/// Quaternions are normalized, opacities sigmoided, scales exponentiated.
GaussianScene load_scene(const std::filesystem::path& path);

/// Writes the 3DGS layout (normals zeroed) so the scene can be reopened by the
/// reference tools.
void save_scene(const GaussianScene& scene, const std::filesystem::path& path);

} // namespace cgseg::io
