#pragma once

#include "cgseg/camera.hpp"
#include "cgseg/engine.hpp"

#include <cstdint>
#include <vector>

namespace cgseg {

/// Cameras on a ring around the scene's bounding box, looking at its center.
/// `up` is the world up direction of the scene.
std::vector<Camera> orbit_cameras(const GaussianScene& scene, int count, int width, int height,
                                  const Eigen::Vector3d& up = Eigen::Vector3d::UnitZ(), double elevation_deg = 30.0);

struct LatencyStats {
    std::vector<double> samples_ms;
    double p50 = 0.0;
    double p95 = 0.0;
    double mean = 0.0;
};

/// Nearest-rank percentiles of the samples.
LatencyStats summarize(std::vector<double> samples_ms);

struct BenchReport {
    LatencyStats render;   // full-frame feature + color render per camera
    LatencyStats click;    // click_select per click
    std::size_t clicks = 0;
    std::size_t abstained = 0; // background / no confident match
};

/// Renders each camera once, then clicks `clicks` random foreground pixels
/// spread over the cameras. Pixel selection is not timed.
BenchReport bench(const SegmentationEngine& engine, const std::vector<Camera>& cameras, std::size_t clicks,
                  Level level, std::uint64_t seed);

} // namespace cgseg
