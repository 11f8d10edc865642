#pragma once

#include "cgseg/camera.hpp"
#include "cgseg/features.hpp"
#include "cgseg/rasterizer.hpp"
#include "cgseg/scene.hpp"

#include <functional>

namespace cgseg::oracle {

/// Reference renderer: every Gaussian is tested against every pixel, one global
/// depth sort, no early termination, float64 throughout. Culling, footprint and
/// α rules mirror the production rasterizer; weight records are kept uncapped.
RenderBuffersD brute_force_render(const GaussianScene& scene, const FeatureStoreD& features, const Camera& camera,
                                  const RenderSettings& settings = {});

/// Calls `visit(pixel, gaussian, weight)` for every nonzero blend weight, in
/// front-to-back order per pixel.
void brute_force_weights(const GaussianScene& scene, const Camera& camera, const RenderSettings& settings,
                         const std::function<void(std::size_t, std::uint32_t, double)>& visit);

} // namespace cgseg::oracle
