#pragma once

#include "cgseg/clusters.hpp"
#include "cgseg/features.hpp"
#include "cgseg/rasterizer.hpp"
#include "cgseg/train_config.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <vector>

namespace cgseg {

using RowMatrixD = Eigen::Matrix<double, Eigen::Dynamic, kFeatureDim, Eigen::RowMajor>;

/// Sampled pixels of one view with their mask IDs and rendered 24-dim rows.
struct PixelBatch {
    std::uint32_t view_id = 0;
    std::vector<std::uint32_t> pixels;
    std::vector<std::int32_t> coarse_ids;
    std::vector<std::int32_t> fine_ids;
    RowMatrixD features;

    std::size_t size() const { return pixels.size(); }
    const std::vector<std::int32_t>& ids(Level level) const { return level == Level::Coarse ? coarse_ids : fine_ids; }
};

struct ContrastiveResult {
    double pos = 0.0; // summed over levels
    double neg = 0.0; // summed over levels, before lambda_neg_cont
    double total = 0.0;
    RowMatrixD grad; // d total / d batch features
};

/// Pairwise cosine contrastive loss over all ordered pairs of the batch,
/// normalized by n². Fine negatives see the coarse block as a constant under
/// the shared-prior layout.
ContrastiveResult contrastive_loss(const PixelBatch& batch, const TrainConfig& cfg);

/// Index into the level's cluster list of the most similar cluster per
/// Gaussian (lowest index on ties; 0 for zero features).
using GflAssignment = std::array<std::vector<std::uint32_t>, 2>;
GflAssignment gfl_assign(const RowMatrixD& features, const GlobalClusters& clusters, FeatureLayout layout);

struct LossResult {
    double pos = 0.0;
    double neg = 0.0;
    double value = 0.0;
    RowMatrixD grad;
};

/// Global-feature-guided loss on per-Gaussian features. With `frozen` the
/// given assignment replaces the argmax. Levels without clusters contribute 0.
LossResult gfl_loss(const RowMatrixD& features, const GlobalClusters& clusters, const TrainConfig& cfg,
                    const GflAssignment* frozen = nullptr, bool warn_empty = true);

/// Mean squared deviation of each 12-dim half's norm from 1.
LossResult hypersphere_loss(const RowMatrixD& features);

struct PixelLossResult {
    double value = 0.0;
    std::vector<double> grad_pixels; // H·W·24
};

/// (1/HW)·Σ_levels Σ_pixels (‖F_p‖ − r)² over a rendered frame.
PixelLossResult rendered_norm_loss(const RenderBuffersD& buffers, FeatureLayout layout);

/// −mean cosine (24-dim) between each sampled Gaussian and its neighbours.
/// `neighbors` holds k ids per Gaussian (row-major N·k).
LossResult spatial_loss(const RowMatrixD& features, const std::vector<std::uint32_t>& samples,
                        const std::vector<std::uint32_t>& neighbors, int k);

struct RegularizerResult {
    LossResult hypersphere;
    PixelLossResult rendered_norm;
    LossResult spatial;
};

/// The three regularizers; N_s = min(cfg.n_spatial, N) Gaussians drawn with `seed`.
RegularizerResult regularizers(const RowMatrixD& features, const RenderBuffersD& buffers,
                               const std::vector<std::uint32_t>& neighbors, const TrainConfig& cfg,
                               std::uint64_t seed);

} // namespace cgseg
