#pragma once

#include "cgseg/camera.hpp"
#include "cgseg/masks.hpp"
#include "cgseg/scene.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace cgseg::oracle {

struct NoiseModel {
    bool id_permutation = false;
    double split_prob = 0.0;
    double merge_prob = 0.0;
    int boundary_jitter = 0; // px
};

enum class ObjectLayout { Ring, Random };

struct SyntheticSpec {
    int objects = 3;
    int parts_per_object = 3;
    int gaussians_per_part = 100;
    ObjectLayout layout = ObjectLayout::Ring;
    double layout_radius = 1.0; // object centers lie on a ring of this radius
    double part_spacing = 0.34;
    double part_sigma_xy = 0.11;
    double part_sigma_z = 0.07;
    double gaussian_scale = 0.05;
    float opacity = 0.9f;

    int train_views = 24;
    int heldout_views = 8;
    double camera_radius = 3.5;
    double elevation_deg = 30.0;
    int width = 128;
    int height = 128;
    double fov_deg = 45.0;

    NoiseModel noise;
    std::uint64_t seed = 1;
    /// Ground-truth label maps for every camera (needs a brute-force pass per view).
    bool label_maps = true;
};

nlohmann::json to_json(const SyntheticSpec& spec);
SyntheticSpec spec_from_json(const nlohmann::json& j);

struct SyntheticScene {
    SyntheticSpec spec;
    GaussianScene scene;
    std::vector<std::uint32_t> object_of; // per Gaussian, 0-based
    std::vector<std::uint32_t> part_of;   // per Gaussian, global part index object·parts + part
    std::vector<Camera> cameras;          // training views first, then held-out views
    std::vector<std::uint32_t> train_views;
    std::vector<std::uint32_t> heldout_views;
    /// Per camera (when label_maps): 1-based object / global part per pixel, 0 background.
    std::vector<std::vector<std::uint32_t>> object_maps;
    std::vector<std::vector<std::uint32_t>> part_maps;
    /// Noisy (or clean) raw segments of each training view, view_id = camera index.
    std::vector<RawSegments> segments;
    /// Split events per training view and global part (for noise statistics).
    std::vector<std::vector<std::uint8_t>> split_events;

    std::size_t part_count() const { return static_cast<std::size_t>(spec.objects * spec.parts_per_object); }
};

SyntheticScene generate(const SyntheticSpec& spec);

/// Raw segments of one view from ground-truth label maps after the noise model.
/// Objects become the large segments, parts the small ones.
RawSegments make_view_segments(const SyntheticSpec& spec, std::uint32_t view_id, int width, int height,
                               const std::vector<std::uint32_t>& object_map, const std::vector<std::uint32_t>& part_map,
                               std::uint64_t seed, std::vector<std::uint8_t>* split_events = nullptr);

/// Writes scene.ply, cameras.json, masks/*.cgsg, two-level PNGs, ground truth
/// (labels.json and per-view object/part PNGs) and spec.json.
void write_synthetic(const SyntheticScene& s, const std::filesystem::path& dir);

} // namespace cgseg::oracle
