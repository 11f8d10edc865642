#pragma once

#include "cgseg/engine.hpp"
#include "cgseg/oracle/synthetic.hpp"
#include "cgseg/training.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace cgseg::oracle {

/// Two-level masks of every training view, paired with their cameras.
std::vector<TrainingView> training_views(const SyntheticScene& s);

/// Reads back a directory written by write_synthetic (scene, cameras, ground
/// truth maps, and masks when present).
SyntheticScene load_synthetic(const std::filesystem::path& dir);

/// A checkpoint whose features follow the ground truth: one random unit coarse
/// direction per object, one extra direction per part, each half perturbed by
/// isotropic noise of std `noise` and renormalized. Clusters are the exact
/// object and part directions. Shared-prior layout.
Checkpoint labelled_checkpoint(const SyntheticScene& s, double noise, std::uint64_t seed);

/// Ground-truth labels of one level: 1-based object (coarse) or part (fine).
std::vector<std::uint32_t> gaussian_truth(const SyntheticScene& s, Level level);
const std::vector<std::uint32_t>& label_map(const SyntheticScene& s, std::size_t camera, Level level);
std::size_t region_count(const SyntheticScene& s, Level level);

/// Most similar cluster per Gaussian (1-based position in the level's cluster
/// list), 0 when no cluster reaches `gate` or the level has none.
std::vector<std::uint32_t> gaussian_cluster_labels(const Checkpoint& checkpoint, Level level, double gate = 0.5);

/// matched_accuracy of gaussian_cluster_labels against the ground truth.
double gaussian_label_accuracy(const SyntheticScene& s, const Checkpoint& checkpoint, Level level);

/// Label accuracy under the selection threshold. Each cluster is assigned the
/// ground-truth label holding most of its argmax members; a Gaussian counts as
/// correct when at least one cluster matches it above `threshold` and every
/// such cluster carries its own label. Fused regions therefore score as wrong
/// even when the argmax happens to split them.
double selection_label_accuracy(const SyntheticScene& s, const Checkpoint& checkpoint, Level level,
                                double threshold = 0.9);

/// Interior pixel of a region: the pixel farthest (4-neighbour distance) from
/// anything outside it. Returns false when the region is absent from the view.
bool interior_pixel(const std::vector<std::uint32_t>& map, int width, int height, std::uint32_t region, int& x, int& y);

struct PropagationReport {
    Level level = Level::Coarse;
    MiouReport miou;
    std::vector<std::uint32_t> reference_views; // per region, camera index
};

/// Per region: the training view with the largest ground-truth area is the
/// reference (or `reference_view` when given and the region is visible there);
/// masks are propagated to every held-out view and scored over their union.
PropagationReport propagation_miou(const SegmentationEngine& engine, const SyntheticScene& s, Level level,
                                   int reference_view = -1);

struct ClickReport {
    Level level = Level::Coarse;
    std::vector<double> iou; // per region, 0 when the click abstained
    std::vector<std::uint32_t> camera;
    std::vector<Eigen::Vector2i> pixel;
};

/// Clicks the interior pixel of each region in the view where it is largest and
/// scores the selected Gaussians against the region's ground-truth Gaussians.
ClickReport click_ious(const SegmentationEngine& engine, const SyntheticScene& s, Level level);

} // namespace cgseg::oracle
