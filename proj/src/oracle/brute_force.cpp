#include "cgseg/oracle/brute_force.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cgseg::oracle {

namespace {

struct Splat {
    double u, v;       // screen mean
    double a, b, c;    // inverse 2D covariance
    double depth;
    double half_width; // square footprint
    double opacity;
    std::uint32_t index;
};

Eigen::Matrix3d quat_to_matrix(const Eigen::Vector4f& qf) {
    Eigen::Vector4d q = qf.cast<double>();
    q /= q.norm();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

std::vector<Splat> splats(const GaussianScene& scene, const Camera& cam, const RenderSettings& s) {
    std::vector<Splat> out;
    for (std::uint32_t i = 0; i < scene.size(); ++i) {
        const Eigen::Vector4d pw(scene.positions[i].x(), scene.positions[i].y(), scene.positions[i].z(), 1.0);
        const Eigen::Vector4d pc = cam.world_to_camera * pw;
        const double z = pc.z();
        if (z <= s.near_plane) continue;
        const Eigen::Matrix3d r = quat_to_matrix(scene.rotations[i]);
        Eigen::Matrix3d sigma = Eigen::Matrix3d::Zero();
        for (int k = 0; k < 3; ++k) {
            const double sk = scene.scales[i][k];
            sigma += sk * sk * r.col(k) * r.col(k).transpose();
        }
        Eigen::Matrix<double, 2, 3> j;
        j << cam.fx / z, 0.0, -cam.fx * pc.x() / (z * z), 0.0, cam.fy / z, -cam.fy * pc.y() / (z * z);
        const Eigen::Matrix3d w = cam.world_to_camera.topLeftCorner<3, 3>();
        Eigen::Matrix2d cov = j * (w * sigma * w.transpose()) * j.transpose();
        const double off = 0.5 * (cov(0, 1) + cov(1, 0));
        const double c00 = cov(0, 0) + s.low_pass, c11 = cov(1, 1) + s.low_pass;
        const double det = c00 * c11 - off * off;
        if (!(det > 0.0)) continue;
        const double tr_half = 0.5 * (c00 + c11);
        const double lmax = tr_half + std::sqrt(std::max(0.0, tr_half * tr_half - det));
        const double extent = 3.0 * std::sqrt(lmax);
        if (extent < 0.5) continue;
        out.push_back({cam.fx * pc.x() / z + cam.cx, cam.fy * pc.y() / z + cam.cy, c11 / det, -off / det, c00 / det, z,
                       std::ceil(extent), static_cast<double>(scene.opacities[i]), i});
    }
    std::sort(out.begin(), out.end(), [](const Splat& x, const Splat& y) {
        return x.depth != y.depth ? x.depth < y.depth : x.index < y.index;
    });
    return out;
}

double splat_alpha_at(const Splat& g, double x, double y, const RenderSettings& s) {
    const double dx = x - g.u, dy = y - g.v;
    if (std::abs(dx) > g.half_width || std::abs(dy) > g.half_width) return 0.0;
    const double power = -0.5 * (g.a * dx * dx + g.c * dy * dy) - g.b * dx * dy;
    if (power > 0.0) return 0.0;
    const double alpha = std::min(s.max_alpha, g.opacity * std::exp(power));
    return alpha < s.min_alpha ? 0.0 : alpha;
}

} // namespace

void brute_force_weights(const GaussianScene& scene, const Camera& camera, const RenderSettings& settings,
                         const std::function<void(std::size_t, std::uint32_t, double)>& visit) {
    const auto list = splats(scene, camera, settings);
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            const std::size_t p = static_cast<std::size_t>(y) * static_cast<std::size_t>(camera.width) +
                                  static_cast<std::size_t>(x);
            double t = 1.0;
            for (const Splat& g : list) {
                const double alpha = splat_alpha_at(g, x, y, settings);
                if (alpha == 0.0) continue;
                visit(p, g.index, alpha * t);
                t *= 1.0 - alpha;
            }
        }
    }
}

RenderBuffersD brute_force_render(const GaussianScene& scene, const FeatureStoreD& features, const Camera& camera,
                                  const RenderSettings& settings) {
    RenderBuffersD b;
    b.width = camera.width;
    b.height = camera.height;
    b.gaussian_count = scene.size();
    const std::size_t P = b.pixel_count();
    b.color.assign(P * 3, 0.0);
    b.feature_coarse.assign(P * kCoarseDim, 0.0);
    b.feature_fine.assign(P * kFeatureDim, 0.0);
    b.alpha.assign(P, 0.0);
    b.has_weights = true;
    b.record_offsets.assign(P + 1, 0);

    const Eigen::Vector3d center = -camera.world_to_camera.topLeftCorner<3, 3>().transpose() *
                                   camera.world_to_camera.topRightCorner<3, 1>();
    std::vector<Eigen::Vector3f> colors(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i) colors[i] = scene.color(i, center);

    std::vector<std::vector<std::pair<std::uint32_t, double>>> per_pixel(P);
    brute_force_weights(scene, camera, settings, [&](std::size_t p, std::uint32_t i, double w) {
        per_pixel[p].push_back({i, w});
        for (int c = 0; c < 3; ++c) b.color[p * 3 + c] += w * colors[i][c];
        for (int d = 0; d < kFeatureDim; ++d) b.feature_fine[p * kFeatureDim + d] += w * features.row(i)[d];
        b.alpha[p] += w;
    });
    for (std::size_t p = 0; p < P; ++p) {
        for (int d = 0; d < kCoarseDim; ++d) b.feature_coarse[p * kCoarseDim + d] = b.feature_fine[p * kFeatureDim + d];
        b.record_offsets[p + 1] = b.record_offsets[p] + static_cast<std::uint32_t>(per_pixel[p].size());
        for (const auto& [i, w] : per_pixel[p]) {
            b.record_ids.push_back(i);
            b.record_weights.push_back(w);
        }
    }
    return b;
}

} // namespace cgseg::oracle
