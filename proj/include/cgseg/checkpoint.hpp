#pragma once

#include "cgseg/clusters.hpp"
#include "cgseg/features.hpp"
#include "cgseg/types.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace cgseg {

/// Sidecar: "CGFT", u32 version, u32 N, u32 Dc (12), u32 D (24), u32 layout,
/// then N rows of 24 float32.
std::vector<std::uint8_t> encode_features(const FeatureStore& store, FeatureLayout layout);
void save_features(const FeatureStore& store, const std::filesystem::path& path,
                   FeatureLayout layout = FeatureLayout::SharedPrior);

struct LoadedFeatures {
    FeatureStore store;
    FeatureLayout layout = FeatureLayout::SharedPrior;
};
/// `expected_rows` (when nonzero) must match the stored row count.
LoadedFeatures load_features(const std::filesystem::path& path, std::size_t expected_rows = 0);

/// Trained state of one scene.
struct Checkpoint {
    FeatureStore features;
    FeatureLayout layout = FeatureLayout::SharedPrior;
    GlobalClusters clusters;
    std::uint64_t iteration = 0;
    std::uint64_t config_digest = 0;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// "CGCK", u32 version, u64 iteration, u64 config digest, then the feature
/// sidecar bytes, then per level u32 C and C records (u32 id, u32 members, D float32).
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace cgseg
