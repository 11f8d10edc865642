#include "cgseg/rasterizer.hpp"

#include "cgseg/error.hpp"
#include "cgseg/io/binary.hpp"

#include <tbb/blocked_range.h>
#include <tbb/combinable.h>
#include <tbb/parallel_for.h>

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <optional>

namespace cgseg {

namespace {

struct CameraFrame {
    Eigen::Matrix3d rotation;
    Eigen::Vector3d translation;
    Eigen::Vector3d center;
};

CameraFrame frame_of(const Camera& camera) {
    return {camera.rotation(), camera.translation(), camera.center()};
}

/// Inclusive pixel range covered by the square footprint, clipped to the image.
struct PixelRect {
    int x0, x1, y0, y1;
    bool empty() const { return x0 > x1 || y0 > y1; }
};

PixelRect footprint(const Eigen::Vector2d& mean, int radius, int width, int height) {
    PixelRect r;
    r.x0 = std::max(0, static_cast<int>(std::ceil(mean.x() - radius)));
    r.x1 = std::min(width - 1, static_cast<int>(std::floor(mean.x() + radius)));
    r.y0 = std::max(0, static_cast<int>(std::ceil(mean.y() - radius)));
    r.y1 = std::min(height - 1, static_cast<int>(std::floor(mean.y() + radius)));
    return r;
}

std::optional<ProjectedGaussian> project_one(const GaussianScene& scene, std::size_t i, const Camera& camera,
                                             const CameraFrame& frame, const RenderSettings& settings) {
    const Eigen::Vector3d p = scene.positions[i].cast<double>();
    const Eigen::Vector3d t = frame.rotation * p + frame.translation;
    if (t.z() <= settings.near_plane) return std::nullopt;

    const Eigen::Matrix3d rot = rotation_matrix(scene.rotations[i]);
    const Eigen::Matrix3d m = rot * scene.scales[i].cast<double>().asDiagonal();
    const Eigen::Matrix3d sigma = m * m.transpose();

    const double z = t.z(), inv_z = 1.0 / z;
    Eigen::Matrix<double, 2, 3> jac;
    jac << camera.fx * inv_z, 0.0, -camera.fx * t.x() * inv_z * inv_z,
        0.0, camera.fy * inv_z, -camera.fy * t.y() * inv_z * inv_z;
    const Eigen::Matrix<double, 2, 3> jw = jac * frame.rotation;
    Eigen::Matrix2d cov = jw * sigma * jw.transpose();
    cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
    cov(0, 0) += settings.low_pass;
    cov(1, 1) += settings.low_pass;

    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(0, 1);
    if (!(det > 0.0)) return std::nullopt;

    const double mid = 0.5 * (cov(0, 0) + cov(1, 1));
    const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
    const double extent = 3.0 * std::sqrt(lambda_max);
    if (extent < 0.5) return std::nullopt;

    ProjectedGaussian g;
    g.mean2d = {camera.fx * t.x() * inv_z + camera.cx, camera.fy * t.y() * inv_z + camera.cy};
    g.cov2d = cov;
    g.conic = {cov(1, 1) / det, -cov(0, 1) / det, cov(0, 0) / det};
    g.depth = z;
    g.radius = static_cast<int>(std::ceil(extent));
    g.source_index = static_cast<std::uint32_t>(i);
    g.opacity = scene.opacities[i];
    if (footprint(g.mean2d, g.radius, camera.width, camera.height).empty()) return std::nullopt;
    return g;
}

inline bool depth_less(const ProjectedGaussian& a, const ProjectedGaussian& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.source_index < b.source_index;
}

inline double alpha_at(const ProjectedGaussian& g, int x, int y, const RenderSettings& s) {
    const double dx = x - g.mean2d.x();
    const double dy = y - g.mean2d.y();
    if (std::abs(dx) > g.radius || std::abs(dy) > g.radius) return 0.0;
    const double power = -0.5 * (g.conic[0] * dx * dx + g.conic[2] * dy * dy) - g.conic[1] * dx * dy;
    if (power > 0.0) return 0.0;
    const double alpha = std::min(s.max_alpha, static_cast<double>(g.opacity) * std::exp(power));
    return alpha < s.min_alpha ? 0.0 : alpha;
}

} // namespace

std::vector<ProjectedGaussian> project(const GaussianScene& scene, const Camera& camera,
                                       const RenderSettings& settings) {
    camera.validate();
    const CameraFrame frame = frame_of(camera);
    std::vector<std::optional<ProjectedGaussian>> slots(scene.size());
    tbb::parallel_for(tbb::blocked_range<std::size_t>(0, scene.size(), 4096), [&](const auto& range) {
        for (std::size_t i = range.begin(); i != range.end(); ++i) {
            slots[i] = project_one(scene, i, camera, frame, settings);
            if (slots[i] && settings.compute_color) slots[i]->color = scene.color(i, frame.center);
        }
    });
    std::vector<ProjectedGaussian> out;
    out.reserve(scene.size());
    for (auto& s : slots) {
        if (s) out.push_back(*s);
    }
    return out;
}

double splat_alpha(const ProjectedGaussian& g, int x, int y, const RenderSettings& settings) {
    return alpha_at(g, x, y, settings);
}

template <typename T>
BasicRenderBuffers<T> render(const GaussianScene& scene, const BasicFeatureStore<T>& features,
                             const Camera& camera, const RenderSettings& settings) {
    if (features.size() != scene.size()) {
        fail(ErrorCode::ContractViolation,
             fmt::format("feature rows ({}) != Gaussian count ({})", features.size(), scene.size()));
    }
    std::vector<ProjectedGaussian> projected = project(scene, camera, settings);
    std::sort(projected.begin(), projected.end(), depth_less);

    const int W = camera.width, H = camera.height, ts = settings.tile_size;
    const int tiles_x = (W + ts - 1) / ts, tiles_y = (H + ts - 1) / ts;
    const std::size_t tile_count = static_cast<std::size_t>(tiles_x) * static_cast<std::size_t>(tiles_y);

    // Bin into tiles; inserting in global depth order keeps each tile list sorted.
    std::vector<std::uint32_t> tile_offsets(tile_count + 1, 0);
    auto for_each_tile = [&](const ProjectedGaussian& g, auto&& fn) {
        const PixelRect r = footprint(g.mean2d, g.radius, W, H);
        for (int ty = r.y0 / ts; ty <= r.y1 / ts; ++ty) {
            for (int tx = r.x0 / ts; tx <= r.x1 / ts; ++tx) fn(static_cast<std::size_t>(ty) * tiles_x + tx);
        }
    };
    for (const auto& g : projected) for_each_tile(g, [&](std::size_t t) { ++tile_offsets[t + 1]; });
    for (std::size_t t = 0; t < tile_count; ++t) tile_offsets[t + 1] += tile_offsets[t];
    std::vector<std::uint32_t> tile_lists(tile_offsets.back());
    {
        std::vector<std::uint32_t> cursor(tile_offsets.begin(), tile_offsets.end() - 1);
        for (std::uint32_t k = 0; k < projected.size(); ++k) {
            for_each_tile(projected[k], [&](std::size_t t) { tile_lists[cursor[t]++] = k; });
        }
    }

    BasicRenderBuffers<T> out;
    out.width = W;
    out.height = H;
    out.gaussian_count = scene.size();
    const std::size_t P = out.pixel_count();
    out.color.assign(P * 3, T(0));
    out.feature_coarse.assign(P * kCoarseDim, T(0));
    out.feature_fine.assign(P * kFeatureDim, T(0));
    out.alpha.assign(P, T(0));
    out.has_weights = settings.record_weights;

    struct TileRecords {
        std::vector<std::uint32_t> counts; // per pixel, tile-local raster order
        std::vector<std::uint32_t> ids;
        std::vector<T> weights;
    };
    std::vector<TileRecords> records(settings.record_weights ? tile_count : 0);

    tbb::parallel_for(tbb::blocked_range<std::size_t>(0, tile_count), [&](const auto& range) {
        Eigen::Matrix<double, kFeatureDim, 1> feat;
        for (std::size_t tile = range.begin(); tile != range.end(); ++tile) {
            const int tx = static_cast<int>(tile % tiles_x), ty = static_cast<int>(tile / tiles_x);
            const int x_end = std::min(W, (tx + 1) * ts), y_end = std::min(H, (ty + 1) * ts);
            const std::uint32_t* list = tile_lists.data() + tile_offsets[tile];
            const std::uint32_t list_len = tile_offsets[tile + 1] - tile_offsets[tile];
            TileRecords* rec = settings.record_weights ? &records[tile] : nullptr;
            for (int y = ty * ts; y < y_end; ++y) {
                for (int x = tx * ts; x < x_end; ++x) {
                    double transmittance = 1.0, weight_sum = 0.0;
                    Eigen::Vector3d color = Eigen::Vector3d::Zero();
                    feat.setZero();
                    std::uint32_t count = 0;
                    for (std::uint32_t k = 0; k < list_len; ++k) {
                        const ProjectedGaussian& g = projected[list[k]];
                        const double alpha = alpha_at(g, x, y, settings);
                        if (alpha == 0.0) continue;
                        const double w = alpha * transmittance;
                        feat += w * features.row(g.source_index).transpose().template cast<double>();
                        if (settings.compute_color) color += w * g.color.cast<double>();
                        weight_sum += w;
                        if (rec) {
                            if (++count > settings.max_records_per_pixel) {
                                fail(ErrorCode::Capacity,
                                     fmt::format("pixel ({}, {}) exceeds {} weight records", x, y,
                                                 settings.max_records_per_pixel));
                            }
                            rec->ids.push_back(g.source_index);
                            rec->weights.push_back(static_cast<T>(w));
                        }
                        transmittance *= 1.0 - alpha;
                        if (transmittance < settings.min_transmittance) break;
                    }
                    if (rec) rec->counts.push_back(count);
                    const std::size_t p = out.pixel_index(x, y);
                    for (int c = 0; c < 3; ++c) out.color[p * 3 + c] = static_cast<T>(color[c]);
                    for (int d = 0; d < kFeatureDim; ++d) out.feature_fine[p * kFeatureDim + d] = static_cast<T>(feat[d]);
                    std::copy_n(out.feature_fine.begin() + static_cast<std::ptrdiff_t>(p * kFeatureDim), kCoarseDim,
                                out.feature_coarse.begin() + static_cast<std::ptrdiff_t>(p * kCoarseDim));
                    out.alpha[p] = static_cast<T>(weight_sum);
                }
            }
        }
    });

    if (settings.record_weights) {
        out.record_offsets.assign(P + 1, 0);
        for (std::size_t tile = 0; tile < tile_count; ++tile) {
            const int tx = static_cast<int>(tile % tiles_x), ty = static_cast<int>(tile / tiles_x);
            const int x_end = std::min(W, (tx + 1) * ts), y_end = std::min(H, (ty + 1) * ts);
            std::size_t k = 0;
            for (int y = ty * ts; y < y_end; ++y) {
                for (int x = tx * ts; x < x_end; ++x) out.record_offsets[out.pixel_index(x, y) + 1] = records[tile].counts[k++];
            }
        }
        for (std::size_t p = 0; p < P; ++p) out.record_offsets[p + 1] += out.record_offsets[p];
        out.record_ids.resize(out.record_offsets.back());
        out.record_weights.resize(out.record_offsets.back());
        tbb::parallel_for(tbb::blocked_range<std::size_t>(0, tile_count), [&](const auto& range) {
            for (std::size_t tile = range.begin(); tile != range.end(); ++tile) {
                const int tx = static_cast<int>(tile % tiles_x), ty = static_cast<int>(tile / tiles_x);
                const int x_end = std::min(W, (tx + 1) * ts), y_end = std::min(H, (ty + 1) * ts);
                std::size_t src = 0;
                for (int y = ty * ts; y < y_end; ++y) {
                    for (int x = tx * ts; x < x_end; ++x) {
                        const std::size_t p = out.pixel_index(x, y);
                        const std::uint32_t n = out.record_offsets[p + 1] - out.record_offsets[p];
                        std::copy_n(records[tile].ids.begin() + static_cast<std::ptrdiff_t>(src), n,
                                    out.record_ids.begin() + out.record_offsets[p]);
                        std::copy_n(records[tile].weights.begin() + static_cast<std::ptrdiff_t>(src), n,
                                    out.record_weights.begin() + out.record_offsets[p]);
                        src += n;
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
typename BasicFeatureStore<T>::Matrix backward_features(const BasicRenderBuffers<T>& buffers,
                                                        std::span<const T> grad_pixels) {
    using Matrix = typename BasicFeatureStore<T>::Matrix;
    if (!buffers.has_weights || buffers.record_offsets.size() != buffers.pixel_count() + 1) {
        fail(ErrorCode::ContractViolation, "backward_features needs buffers rendered with weight records");
    }
    if (grad_pixels.size() != buffers.pixel_count() * kFeatureDim) {
        fail(ErrorCode::ContractViolation,
             fmt::format("grad_pixels has {} values, expected {}", grad_pixels.size(),
                         buffers.pixel_count() * kFeatureDim));
    }
    const auto n = static_cast<Eigen::Index>(buffers.gaussian_count);
    tbb::combinable<Matrix> partial([n] { return Matrix::Zero(n, kFeatureDim); });
    tbb::parallel_for(tbb::blocked_range<std::size_t>(0, buffers.pixel_count(), 1024), [&](const auto& range) {
        Matrix& acc = partial.local();
        for (std::size_t p = range.begin(); p != range.end(); ++p) {
            const std::uint32_t begin = buffers.record_offsets[p], end = buffers.record_offsets[p + 1];
            if (begin == end) continue;
            Eigen::Map<const Eigen::Matrix<T, 1, kFeatureDim>> g(grad_pixels.data() + p * kFeatureDim);
            for (std::uint32_t k = begin; k < end; ++k) acc.row(buffers.record_ids[k]) += buffers.record_weights[k] * g;
        }
    });
    Matrix grad = Matrix::Zero(n, kFeatureDim);
    partial.combine_each([&](const Matrix& m) { grad += m; });
    return grad;
}

template BasicRenderBuffers<float> render<float>(const GaussianScene&, const BasicFeatureStore<float>&,
                                                 const Camera&, const RenderSettings&);
template BasicRenderBuffers<double> render<double>(const GaussianScene&, const BasicFeatureStore<double>&,
                                                   const Camera&, const RenderSettings&);
template BasicFeatureStore<float>::Matrix backward_features<float>(const BasicRenderBuffers<float>&,
                                                                   std::span<const float>);
template BasicFeatureStore<double>::Matrix backward_features<double>(const BasicRenderBuffers<double>&,
                                                                     std::span<const double>);

PixelSample render_pixel(const GaussianScene& scene, const FeatureStore& features, const Camera& camera, int x,
                         int y, const RenderSettings& settings) {
    camera.validate();
    if (x < 0 || y < 0 || x >= camera.width || y >= camera.height) {
        fail(ErrorCode::Precondition, fmt::format("pixel ({}, {}) outside the {}x{} image", x, y, camera.width,
                                                  camera.height));
    }
    const CameraFrame frame = frame_of(camera);
    struct Hit {
        double depth;
        std::uint32_t index;
        double alpha;
    };
    std::vector<Hit> hits;
    const double fx2 = camera.fx * camera.fx, fy2 = camera.fy * camera.fy;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const Eigen::Vector3d t = frame.rotation * scene.positions[i].cast<double>() + frame.translation;
        if (t.z() <= settings.near_plane) continue;
        // Conservative footprint bound: λmax(J Σ Jᵀ) ≤ ‖J‖_F²·s_max².
        const double inv_z = 1.0 / t.z();
        const double u = camera.fx * t.x() * inv_z + camera.cx, v = camera.fy * t.y() * inv_z + camera.cy;
        const double xr = t.x() * inv_z, yr = t.y() * inv_z;
        const double jf2 = inv_z * inv_z * (fx2 * (1.0 + xr * xr) + fy2 * (1.0 + yr * yr));
        const double smax = scene.scales[i].maxCoeff();
        const double bound = std::ceil(3.0 * std::sqrt(jf2 * smax * smax + settings.low_pass)) + 1.0;
        if (std::abs(x - u) > bound || std::abs(y - v) > bound) continue;
        auto g = project_one(scene, i, camera, frame, settings);
        if (!g) continue;
        const double alpha = alpha_at(*g, x, y, settings);
        if (alpha > 0.0) hits.push_back({g->depth, g->source_index, alpha});
    }
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
        return a.depth != b.depth ? a.depth < b.depth : a.index < b.index;
    });
    double transmittance = 1.0, weight_sum = 0.0;
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    Eigen::Matrix<double, kFeatureDim, 1> feat = Eigen::Matrix<double, kFeatureDim, 1>::Zero();
    for (const Hit& h : hits) {
        const double w = h.alpha * transmittance;
        feat += w * features.row(h.index).transpose().cast<double>();
        if (settings.compute_color) color += w * scene.color(h.index, frame.center).cast<double>();
        weight_sum += w;
        transmittance *= 1.0 - h.alpha;
        if (transmittance < settings.min_transmittance) break;
    }
    PixelSample sample;
    sample.color = color.cast<float>();
    sample.feature = feat.cast<float>();
    sample.alpha = static_cast<float>(weight_sum);
    return sample;
}

namespace {
constexpr std::uint32_t kDumpChannels = 3 + kCoarseDim + kFeatureDim + 1;
}

void dump_buffers(const RenderBuffers& buffers, const std::filesystem::path& path) {
    io::ByteWriter w;
    w.magic("CGRB");
    w.put(static_cast<std::uint32_t>(buffers.height));
    w.put(static_cast<std::uint32_t>(buffers.width));
    w.put(kDumpChannels);
    for (std::size_t p = 0; p < buffers.pixel_count(); ++p) {
        w.put_f32s(std::span(buffers.color).subspan(p * 3, 3));
        w.put_f32s(std::span(buffers.feature_coarse).subspan(p * kCoarseDim, kCoarseDim));
        w.put_f32s(std::span(buffers.feature_fine).subspan(p * kFeatureDim, kFeatureDim));
        w.put(buffers.alpha[p]);
    }
    io::write_file(path, w.bytes());
}

RenderBuffers load_buffer_dump(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    io::ByteReader r(bytes, path.string());
    r.expect_magic("CGRB");
    RenderBuffers b;
    b.height = static_cast<int>(r.get<std::uint32_t>());
    b.width = static_cast<int>(r.get<std::uint32_t>());
    if (r.get<std::uint32_t>() != kDumpChannels) fail(ErrorCode::Format, path.string() + ": unexpected channel count");
    const std::size_t P = b.pixel_count();
    b.color.resize(P * 3);
    b.feature_coarse.resize(P * kCoarseDim);
    b.feature_fine.resize(P * kFeatureDim);
    b.alpha.resize(P);
    for (std::size_t p = 0; p < P; ++p) {
        r.get_f32s(std::span(b.color).subspan(p * 3, 3));
        r.get_f32s(std::span(b.feature_coarse).subspan(p * kCoarseDim, kCoarseDim));
        r.get_f32s(std::span(b.feature_fine).subspan(p * kFeatureDim, kFeatureDim));
        b.alpha[p] = r.get<float>();
    }
    r.expect_end();
    return b;
}

} // namespace cgseg
