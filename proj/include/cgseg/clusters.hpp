#pragma once

#include "cgseg/rasterizer.hpp"
#include "cgseg/masks.hpp"
#include "cgseg/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace cgseg {

/// Mean rendered feature over one mask segment of one view.
struct PooledSegmentFeature {
    Level level = Level::Coarse;
    std::uint32_t view_id = 0;
    std::int32_t segment_id = 0;
    Eigen::VectorXd mean_feature;
    std::uint32_t pixel_count = 0;
};

/// A global feature candidate: normalized member mean.
struct GlobalCluster {
    std::uint32_t id = 0; // dense, 1-based
    std::uint32_t member_count = 0;
    Eigen::VectorXf representative;
};

struct GlobalClusters {
    std::vector<GlobalCluster> coarse;
    std::vector<GlobalCluster> fine;

    std::vector<GlobalCluster>& at(Level level) { return level == Level::Coarse ? coarse : fine; }
    const std::vector<GlobalCluster>& at(Level level) const { return level == Level::Coarse ? coarse : fine; }
    bool empty() const { return coarse.empty() && fine.empty(); }

    friend bool operator==(const GlobalClusters& a, const GlobalClusters& b);
};

inline constexpr std::uint32_t kMinPooledPixels = 16;

/// Average-pools each view's rendered level features over every nonzero segment
/// with at least kMinPooledPixels pixels. No gradient state is touched.
/// `renders[v]` must correspond to `masks[v]`.
std::vector<PooledSegmentFeature> pool_segment_features(const std::vector<const RenderBuffers*>& renders,
                                                        const std::vector<const TwoLevelMask*>& masks,
                                                        FeatureLayout layout);

struct ClusterLevelResult {
    std::vector<GlobalCluster> clusters;
    /// Per pooled input: assigned cluster id, 0 = noise.
    std::vector<std::uint32_t> labels;
};

/// min_cluster_size proportional to the number of training views.
int min_cluster_size_for_views(std::size_t view_count);

/// HDBSCAN over the pooled features of one level. Inputs are rescaled to the
/// level radius (1 coarse, √2 for the concatenated fine feature); clusters are
/// numbered by descending size, then by lowest member (view, segment).
ClusterLevelResult cluster_level(const std::vector<PooledSegmentFeature>& pooled, Level level,
                                 FeatureLayout layout, double epsilon, int min_cluster_size);

} // namespace cgseg
