#include "cgseg/bench.hpp"

#include "cgseg/error.hpp"
#include "cgseg/random.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace cgseg {

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

} // namespace

std::vector<Camera> orbit_cameras(const GaussianScene& scene, int count, int width, int height, const Eigen::Vector3d& up,
                                  double elevation_deg) {
    if (scene.empty()) fail(ErrorCode::Precondition, "cannot frame an empty scene");
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
    for (const auto& p : scene.positions) {
        lo = lo.cwiseMin(p.cast<double>());
        hi = hi.cwiseMax(p.cast<double>());
    }
    const Eigen::Vector3d center = 0.5 * (lo + hi);
    const double extent = std::max(0.5 * (hi - lo).norm(), 1e-3);
    const double fov = 50.0 * std::numbers::pi / 180.0;
    const double radius = 1.1 * extent / std::sin(0.5 * fov);

    const Eigen::Vector3d u = up.normalized();
    Eigen::Vector3d a = std::abs(u.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
    a = (a - a.dot(u) * u).normalized();
    const Eigen::Vector3d b = u.cross(a);
    const double el = elevation_deg * std::numbers::pi / 180.0;

    std::vector<Camera> cams;
    for (int k = 0; k < count; ++k) {
        const double az = 2.0 * std::numbers::pi * k / std::max(1, count);
        const Eigen::Vector3d dir = std::cos(el) * (std::cos(az) * a + std::sin(az) * b) + std::sin(el) * u;
        cams.push_back(look_at(center + radius * dir, center, u, width, height, fov));
    }
    return cams;
}

LatencyStats summarize(std::vector<double> samples_ms) {
    LatencyStats s;
    s.samples_ms = samples_ms;
    if (samples_ms.empty()) return s;
    std::sort(samples_ms.begin(), samples_ms.end());
    auto rank = [&](double q) {
        const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(samples_ms.size())));
        return samples_ms[std::clamp<std::size_t>(k, 1, samples_ms.size()) - 1];
    };
    s.p50 = rank(0.50);
    s.p95 = rank(0.95);
    s.mean = std::accumulate(samples_ms.begin(), samples_ms.end(), 0.0) / static_cast<double>(samples_ms.size());
    return s;
}

BenchReport bench(const SegmentationEngine& engine, const std::vector<Camera>& cameras, std::size_t clicks, Level level,
                  std::uint64_t seed) {
    if (cameras.empty()) fail(ErrorCode::Precondition, "bench needs at least one camera");
    BenchReport report;
    std::vector<std::vector<std::uint32_t>> foreground(cameras.size());
    std::vector<double> render_ms;
    for (std::size_t c = 0; c < cameras.size(); ++c) {
        const auto t0 = std::chrono::steady_clock::now();
        const RenderBuffers buffers = engine.render_features(cameras[c], true);
        render_ms.push_back(elapsed_ms(t0));
        for (std::size_t p = 0; p < buffers.pixel_count(); ++p) {
            if (buffers.alpha[p] >= engine.settings().opacity_gate) foreground[c].push_back(static_cast<std::uint32_t>(p));
        }
    }
    report.render = summarize(std::move(render_ms));

    Rng rng(seed);
    std::vector<double> click_ms;
    for (std::size_t k = 0; k < clicks; ++k) {
        const std::size_t c = k % cameras.size();
        if (foreground[c].empty()) continue;
        const std::uint32_t p = foreground[c][uniform_below(rng, foreground[c].size())];
        const int x = static_cast<int>(p % static_cast<std::uint32_t>(cameras[c].width));
        const int y = static_cast<int>(p / static_cast<std::uint32_t>(cameras[c].width));
        const auto t0 = std::chrono::steady_clock::now();
        try {
            (void)engine.click_select(cameras[c], x, y, level);
        } catch (const Error&) {
            ++report.abstained;
        }
        click_ms.push_back(elapsed_ms(t0));
        ++report.clicks;
    }
    report.click = summarize(std::move(click_ms));
    return report;
}

} // namespace cgseg
