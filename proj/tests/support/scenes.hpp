#pragma once

#include "cgseg/camera.hpp"
#include "cgseg/features.hpp"
#include "cgseg/scene.hpp"

#include <cstdint>

namespace cgseg::testing {

/// Gaussians scattered through a unit-ish box at the origin with random
/// anisotropic scales, rotations, opacities and SH coefficients.
GaussianScene random_scene(std::size_t count, std::uint64_t seed, int sh_degree = 1);

/// Camera at distance ~3 looking at the origin from a random direction.
Camera random_camera(int width, int height, std::uint64_t seed);

/// Entries uniform in [-1, 1].
FeatureStoreD random_features(std::size_t count, std::uint64_t seed);

} // namespace cgseg::testing
