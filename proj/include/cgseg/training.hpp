#pragma once

#include "cgseg/camera.hpp"
#include "cgseg/checkpoint.hpp"
#include "cgseg/losses.hpp"
#include "cgseg/masks.hpp"
#include "cgseg/scene.hpp"
#include "cgseg/train_config.hpp"

#include <filesystem>
#include <functional>
#include <vector>

namespace cgseg {

/// Pixel indices drawn without replacement, weighted by the inverse area of
/// their fine segment (max-normalized, clamped to [1e-4, 1]). Only pixels
/// assigned at both levels are eligible; ascending order; deterministic in `seed`.
std::vector<std::uint32_t> sample_pixels(const TwoLevelMask& mask, std::size_t n, std::uint64_t seed);

/// Per-pixel sampling weight used by sample_pixels (0 for unassigned pixels).
std::vector<double> sampling_weights(const TwoLevelMask& mask);

PixelBatch make_batch(const TwoLevelMask& mask, const RenderBuffersD& buffers, std::vector<std::uint32_t> pixels);

class Adam {
public:
    Adam(Eigen::Index rows, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(RowMatrixD& params, const RowMatrixD& grad);
    long steps() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    RowMatrixD m_, v_;
};

struct TrainingView {
    Camera camera;
    TwoLevelMask mask;
};

struct TrainLogEntry {
    int iteration = 0;
    double total = 0.0;
    double cont_pos = 0.0;
    double cont_neg = 0.0;
    double gfl_pos = 0.0;
    double gfl_neg = 0.0;
    double norm3d = 0.0;
    double norm2d = 0.0;
    double spatial = 0.0;
    std::size_t coarse_clusters = 0;
    std::size_t fine_clusters = 0;
};

struct TrainOptions {
    std::filesystem::path log_path; // plain text, optional
    std::filesystem::path csv_path; // optional
    std::function<void(const TrainLogEntry&)> on_log;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<TrainLogEntry> log;
};

/// Renders every view and clusters the pooled segment features per level.
GlobalClusters refresh_clusters(const GaussianScene& scene, const FeatureStore& features,
                                const std::vector<TrainingView>& views, const TrainConfig& cfg);

/// Optimizes the features of `scene` against the views' masks. Clusters are
/// refreshed at gfl_start, every gfl_update_every iterations after it, and once
/// after the last iteration.
TrainResult train(const GaussianScene& scene, const std::vector<TrainingView>& views, const TrainConfig& cfg,
                  const TrainOptions& options = {});

} // namespace cgseg
