#pragma once

#include "cgseg/camera.hpp"
#include "cgseg/checkpoint.hpp"
#include "cgseg/rasterizer.hpp"
#include "cgseg/scene.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace cgseg {

/// Query policy. The 0.9 threshold decides cluster membership; the two gates
/// decide when the engine abstains.
struct EngineSettings {
    double selection_threshold = 0.9;
    double opacity_gate = 0.5;
    double similarity_gate = 0.5;
    double vote_fraction = 0.5;
};

struct Selection {
    Level level = Level::Coarse;
    std::vector<std::uint32_t> cluster_ids;  // ascending
    std::vector<std::uint32_t> gaussian_ids; // ascending
    std::optional<Eigen::Vector2i> click;
};

/// Read-only queries over a trained scene. Holds unit-normalized copies of the
/// per-Gaussian level features and cluster representatives.
class SegmentationEngine {
public:
    SegmentationEngine(const GaussianScene& scene, const Checkpoint& checkpoint, EngineSettings settings = {});

    const GaussianScene& scene() const { return *scene_; }
    const Checkpoint& checkpoint() const { return *checkpoint_; }
    const EngineSettings& settings() const { return settings_; }
    FeatureLayout layout() const { return checkpoint_->layout; }

    /// Throws BackgroundClick / NoConfidentMatch when the engine abstains.
    Selection click_select(const Camera& camera, int x, int y, Level level) const;

    /// Gaussians whose feature matches any of `cluster_ids` above `threshold`.
    std::vector<std::uint32_t> gaussians_matching(Level level, const std::vector<std::uint32_t>& cluster_ids,
                                                  double threshold) const;

    /// Cluster ids (ascending) matching at least `vote_fraction` of the masked
    /// reference pixels. Falls back to the single most-voted cluster when none
    /// reaches the fraction.
    std::vector<std::uint32_t> clusters_for_mask(const RenderBuffers& reference, const std::vector<std::uint8_t>& mask,
                                                 Level level) const;

    /// Pixels whose rendered feature matches any of `cluster_ids` above the
    /// selection threshold and whose opacity passes the gate.
    std::vector<std::uint8_t> selection_mask(const RenderBuffers& buffers, Level level,
                                             const std::vector<std::uint32_t>& cluster_ids) const;

    /// Reference mask → target clusters → one binary mask per target camera.
    std::vector<std::vector<std::uint8_t>> propagate_labels(const Camera& reference_camera,
                                                            const std::vector<std::uint8_t>& reference_mask,
                                                            const std::vector<Camera>& targets, Level level) const;

    /// Per-pixel most similar cluster id, 0 below the similarity or opacity gate.
    std::vector<std::uint32_t> segment_everything(const RenderBuffers& buffers, Level level) const;
    std::vector<std::uint32_t> segment_everything(const Camera& camera, Level level) const;

    /// Renders features only (no weight records), for the query paths above.
    RenderBuffers render_features(const Camera& camera, bool with_color = false) const;

private:
    /// Cosine of a rendered level feature against every cluster of the level.
    Eigen::VectorXf similarities(Level level, const float* feature) const;
    const Eigen::MatrixXf& reps(Level level) const { return reps_[static_cast<std::size_t>(level)]; }
    std::uint32_t cluster_id(Level level, Eigen::Index row) const;

    const GaussianScene* scene_;
    const Checkpoint* checkpoint_;
    EngineSettings settings_;
    Eigen::MatrixXf unit_features_[2]; // N × level dim
    Eigen::MatrixXf reps_[2];          // C × level dim, unit rows
};

enum class EditKind { Remove, Translate, Rescale, Duplicate };

struct EditOp {
    EditKind kind = EditKind::Remove;
    Eigen::Vector3f vector = Eigen::Vector3f::Zero(); // translate / duplicate offset
    float factor = 1.0f;                              // rescale
};

struct EditedScene {
    GaussianScene scene;
    FeatureStore features;
};

/// Applies an edit to copies of the scene and features. `gaussian_ids` must be
/// nonempty for every op but remove.
EditedScene edit(const GaussianScene& scene, const FeatureStore& features, const std::vector<std::uint32_t>& gaussian_ids,
                 const EditOp& op);

/// |∩|/|∪| of two binary masks; 1 when both are empty.
double mask_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b);

struct MiouReport {
    std::vector<double> per_object;
    double mean = 0.0;
};

/// pred[k] and gt[k] are the masks of object k (possibly across several views
/// concatenated); IoU per object and their mean.
MiouReport evaluate_miou(const std::vector<std::vector<std::uint8_t>>& pred,
                         const std::vector<std::vector<std::uint8_t>>& gt);

/// 16-bit PNG of cluster ids plus `<stem>.jsonl` with one line per id present:
/// {"value", "cluster_id", "level", "pixels"}.
void export_id_map(const std::vector<std::uint32_t>& ids, int width, int height, Level level,
                   const std::filesystem::path& png_path);

} // namespace cgseg
