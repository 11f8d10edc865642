#pragma once

#include "cgseg/camera.hpp"
#include "cgseg/features.hpp"
#include "cgseg/scene.hpp"
#include "cgseg/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cgseg {

/// Rasterization constants. Defaults follow the 3DGS reference rasterizer
/// except `min_transmittance` (see README, "Rendering").
struct RenderSettings {
    double near_plane = 0.01;
    double low_pass = 0.3;
    double min_alpha = 1.0 / 255.0;
    double max_alpha = 0.99;
    /// Blending stops once transmittance falls below this value.
    double min_transmittance = 1e-6;
    int tile_size = 16;
    /// Retain per-pixel (source, weight) lists for backward_features.
    bool record_weights = true;
    bool compute_color = true;
    std::size_t max_records_per_pixel = 1024;
};

/// A Gaussian splatted into screen space.
struct ProjectedGaussian {
    Eigen::Vector2d mean2d;
    Eigen::Matrix2d cov2d;
    Eigen::Vector3d conic; // inverse of cov2d as (a, b, c): [[a, b], [b, c]]
    double depth = 0.0;
    int radius = 0; // 3σ of the major axis, rounded up; also the square footprint half-width
    std::uint32_t source_index = 0;
    float opacity = 0.0f;
    Eigen::Vector3f color = Eigen::Vector3f::Zero();
};

/// Projects every Gaussian that survives near-plane and footprint culling.
/// cov2d = J·W·Σ·Wᵀ·Jᵀ + low_pass·I with Σ = R·diag(s²)·Rᵀ.
std::vector<ProjectedGaussian> project(const GaussianScene& scene, const Camera& camera,
                                       const RenderSettings& settings = {});

/// Opacity of a projected Gaussian at pixel (x, y), or 0 when the pixel lies
/// outside its footprint or below the α cutoff.
double splat_alpha(const ProjectedGaussian& g, int x, int y, const RenderSettings& settings);

template <typename T>
struct BasicRenderBuffers {
    int width = 0;
    int height = 0;
    std::size_t gaussian_count = 0;
    std::vector<T> color;          // H·W·3
    std::vector<T> feature_coarse; // H·W·12
    std::vector<T> feature_fine;   // H·W·24, first 12 channels equal feature_coarse
    std::vector<T> alpha;          // H·W accumulated opacity (Σ w_i)

    bool has_weights = false;
    std::vector<std::uint32_t> record_offsets; // H·W + 1, CSR over pixels
    std::vector<std::uint32_t> record_ids;
    std::vector<T> record_weights; // w_i = α_i·T_i

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
    std::size_t pixel_index(int x, int y) const { return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x); }

    Eigen::Map<const Eigen::Matrix<T, kCoarseDim, 1>> coarse_at(std::size_t p) const {
        return Eigen::Map<const Eigen::Matrix<T, kCoarseDim, 1>>(feature_coarse.data() + p * kCoarseDim);
    }
    Eigen::Map<const Eigen::Matrix<T, kFeatureDim, 1>> fine_at(std::size_t p) const {
        return Eigen::Map<const Eigen::Matrix<T, kFeatureDim, 1>>(feature_fine.data() + p * kFeatureDim);
    }
    /// Level feature of pixel p (12 or 24 dims depending on layout).
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> level_at(std::size_t p, Level level, FeatureLayout layout) const {
        return Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(
            feature_fine.data() + p * kFeatureDim + level_offset(level, layout), level_dim(level, layout));
    }
};

using RenderBuffers = BasicRenderBuffers<float>;
using RenderBuffersD = BasicRenderBuffers<double>;

/// Tiled front-to-back α-blending of color and both feature levels with one set
/// of weights per pixel. Pixels with remaining transmittance keep a zero
/// background for features and color.
template <typename T>
BasicRenderBuffers<T> render(const GaussianScene& scene, const BasicFeatureStore<T>& features,
                             const Camera& camera, const RenderSettings& settings = {});

/// Adjoint of the pixel-feature map: grad[i] = Σ_p w_i(p)·grad_pixels(p).
/// `grad_pixels` is H·W·24 (gradient w.r.t. the 24-dim blended row).
template <typename T>
typename BasicFeatureStore<T>::Matrix backward_features(const BasicRenderBuffers<T>& buffers,
                                                        std::span<const T> grad_pixels);

/// One blended pixel, rendered on demand without touching other pixels.
struct PixelSample {
    Eigen::Vector3f color = Eigen::Vector3f::Zero();
    Eigen::Matrix<float, kFeatureDim, 1> feature = Eigen::Matrix<float, kFeatureDim, 1>::Zero();
    float alpha = 0.0f;
};

PixelSample render_pixel(const GaussianScene& scene, const FeatureStore& features, const Camera& camera,
                         int x, int y, const RenderSettings& settings = {});

/// Raw float32 dump: magic "CGRB", u32 H, u32 W, u32 channels (40), then
/// H·W·40 floats per pixel as color(3) ⊕ coarse(12) ⊕ fine(24) ⊕ alpha(1).
void dump_buffers(const RenderBuffers& buffers, const std::filesystem::path& path);
RenderBuffers load_buffer_dump(const std::filesystem::path& path);

extern template BasicRenderBuffers<float> render<float>(const GaussianScene&, const BasicFeatureStore<float>&,
                                                        const Camera&, const RenderSettings&);
extern template BasicRenderBuffers<double> render<double>(const GaussianScene&, const BasicFeatureStore<double>&,
                                                          const Camera&, const RenderSettings&);
extern template BasicFeatureStore<float>::Matrix backward_features<float>(const BasicRenderBuffers<float>&,
                                                                          std::span<const float>);
extern template BasicFeatureStore<double>::Matrix backward_features<double>(const BasicRenderBuffers<double>&,
                                                                            std::span<const double>);

} // namespace cgseg
