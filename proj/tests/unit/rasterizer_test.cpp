#include "cgseg/error.hpp"
#include "cgseg/oracle/brute_force.hpp"
#include "cgseg/oracle/metrics.hpp"
#include "cgseg/random.hpp"
#include "cgseg/rasterizer.hpp"

#include "support/scenes.hpp"
#include "support/temp_dir.hpp"

#include <doctest.h>

#include <numeric>

using namespace cgseg;

namespace {

Camera axis_camera(int w, int h, double f) {
    Camera c;
    c.width = w;
    c.height = h;
    c.fx = c.fy = f;
    c.cx = (w - 1) / 2.0;
    c.cy = (h - 1) / 2.0;
    return c;
}

GaussianScene single(const Eigen::Vector3f& pos, float scale, float opacity) {
    GaussianScene s;
    Gaussian g;
    g.position = pos;
    g.scale = Eigen::Vector3f::Constant(scale);
    g.opacity = opacity;
    g.sh = {0.3f, -0.2f, 0.1f};
    s.push_back(g);
    return s;
}

} // namespace

TEST_CASE("project: culling, principal point, covariance") {
    const Camera cam = axis_camera(64, 48, 50.0);
    CHECK(project(single({0, 0, -2}, 0.1f, 0.9f), cam).empty());

    const double d = 4.0, s = 0.05;
    const auto p = project(single({0, 0, static_cast<float>(d)}, static_cast<float>(s), 0.9f), cam);
    REQUIRE(p.size() == 1);
    CHECK(p[0].mean2d.x() == doctest::Approx(cam.cx));
    CHECK(p[0].mean2d.y() == doctest::Approx(cam.cy));
    const double expect = (50.0 * s / d) * (50.0 * s / d) + 0.3;
    CHECK(p[0].cov2d(0, 0) == doctest::Approx(expect).epsilon(1e-6));
    CHECK(p[0].cov2d(1, 1) == doctest::Approx(expect).epsilon(1e-6));
    CHECK(p[0].cov2d(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("project: covariance equals a numerical Jacobian push-forward") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const GaussianScene scene = testing::random_scene(5, seed);
        const Camera cam = testing::random_camera(80, 60, seed + 50);
        for (const auto& g : project(scene, cam)) {
            const std::size_t i = g.source_index;
            const Eigen::Vector3d t = cam.to_camera(scene.positions[i].cast<double>());
            auto proj = [&](const Eigen::Vector3d& x) {
                return Eigen::Vector2d(cam.fx * x.x() / x.z() + cam.cx, cam.fy * x.y() / x.z() + cam.cy);
            };
            Eigen::Matrix<double, 2, 3> J;
            for (int a = 0; a < 3; ++a) {
                Eigen::Vector3d h = Eigen::Vector3d::Zero();
                h[a] = 1e-6;
                J.col(a) = (proj(t + h) - proj(t - h)) / 2e-6;
            }
            const Eigen::Matrix3d R = rotation_matrix(scene.rotations[i]);
            const Eigen::Matrix3d S = scene.scales[i].cast<double>().asDiagonal();
            const Eigen::Matrix3d sigma = cam.rotation() * R * S * S * R.transpose() * cam.rotation().transpose();
            const Eigen::Matrix2d want = J * sigma * J.transpose() + 0.3 * Eigen::Matrix2d::Identity();
            CHECK((g.cov2d - want).norm() <= 1e-5 * want.norm());
            CHECK((g.mean2d - proj(t)).norm() <= 1e-9);
        }
    }
}

TEST_CASE("render: single opaque splat and two stacked splats") {
    const Camera cam = axis_camera(9, 9, 20.0);
    RenderSettings rs;
    rs.max_alpha = 1.0;
    FeatureStoreD f(1);
    f.row(0).setLinSpaced(1.0, 24.0);
    const auto b = render(single({0, 0, 3}, 0.01f, 1.0f), f, cam, rs);
    const std::size_t center = b.pixel_index(4, 4);
    CHECK(b.alpha[center] == doctest::Approx(1.0));
    for (int d = 0; d < kFeatureDim; ++d) CHECK(b.feature_fine[center * kFeatureDim + d] == doctest::Approx(f.row(0)[d]));
    REQUIRE(b.record_offsets[center + 1] - b.record_offsets[center] == 1);
    CHECK(b.record_ids[b.record_offsets[center]] == 0);
    CHECK(b.record_weights[b.record_offsets[center]] == doctest::Approx(1.0));

    GaussianScene two = single({0, 0, 3}, 0.01f, 0.5f);
    two.push_back(single({0, 0, 5}, 0.01f, 0.5f).at(0));
    FeatureStoreD f2(2);
    f2.row(0).setConstant(1.0);
    f2.row(1).setConstant(-3.0);
    const auto b2 = render(two, f2, cam);
    const std::size_t r0 = b2.record_offsets[center];
    REQUIRE(b2.record_offsets[center + 1] - r0 == 2);
    CHECK(b2.record_ids[r0] == 0);
    CHECK(b2.record_weights[r0] == doctest::Approx(0.5));
    CHECK(b2.record_weights[r0 + 1] == doctest::Approx(0.25));
    CHECK(b2.feature_fine[center * kFeatureDim] == doctest::Approx(0.5 - 0.75));
    CHECK(b2.feature_coarse[center * kCoarseDim + 11] == doctest::Approx(0.5 - 0.75));
}

TEST_CASE("render: empty scene gives zero buffers") {
    const auto b = render(GaussianScene{}, FeatureStore(0), axis_camera(7, 5, 10.0));
    CHECK(b.pixel_count() == 35);
    CHECK(std::all_of(b.alpha.begin(), b.alpha.end(), [](float a) { return a == 0.0f; }));
    CHECK(std::all_of(b.feature_fine.begin(), b.feature_fine.end(), [](float a) { return a == 0.0f; }));
    CHECK(b.record_offsets.back() == 0);
}

TEST_CASE("render: 1k random scenes agree with the brute-force oracle") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto scene = testing::random_scene(1000, 300 + seed, 2);
        const FeatureStore f = testing::random_features(1000, 400 + seed).cast<float>();
        const Camera cam = testing::random_camera(96, 80, 500 + seed);
        const RenderBuffers tiled = render(scene, f, cam);
        const RenderBuffersD ref = oracle::brute_force_render(scene, f.cast<double>(), cam);
        double worst = 0.0;
        for (std::size_t i = 0; i < ref.feature_fine.size(); ++i) worst = std::max(worst, std::abs(tiled.feature_fine[i] - ref.feature_fine[i]));
        for (std::size_t i = 0; i < ref.color.size(); ++i) worst = std::max(worst, std::abs(tiled.color[i] - ref.color[i]));
        CHECK(worst <= 1e-5);
    }
}

TEST_CASE("render_pixel matches the full render") {
    const auto scene = testing::random_scene(400, 9, 1);
    const FeatureStore f = testing::random_features(400, 10).cast<float>();
    const Camera cam = testing::random_camera(64, 64, 11);
    const RenderBuffers full = render(scene, f, cam);
    for (int y = 0; y < 64; y += 7) {
        for (int x = 0; x < 64; x += 5) {
            const PixelSample s = render_pixel(scene, f, cam, x, y);
            const std::size_t p = full.pixel_index(x, y);
            CHECK(s.alpha == doctest::Approx(full.alpha[p]).epsilon(1e-6));
            for (int d = 0; d < kFeatureDim; ++d) CHECK(std::abs(s.feature[d] - full.feature_fine[p * kFeatureDim + d]) <= 1e-6);
            for (int c = 0; c < 3; ++c) CHECK(std::abs(s.color[c] - full.color[p * 3 + c]) <= 1e-6);
        }
    }
}

TEST_CASE("backward_features: linearity and finite differences") {
    const Camera cam = axis_camera(9, 9, 20.0);
    FeatureStoreD f(1);
    const auto b = render(single({0, 0, 3}, 0.01f, 0.7f), f, cam);
    std::vector<double> g(b.pixel_count() * kFeatureDim, 0.0);
    CHECK(backward_features<double>(b, g).isZero());
    Eigen::Matrix<double, 1, kFeatureDim> up;
    up.setLinSpaced(-1.0, 2.0);
    const std::size_t center = b.pixel_index(4, 4);
    for (int d = 0; d < kFeatureDim; ++d) g[center * kFeatureDim + d] = up[d];
    // One splat: its blend weight at the pixel is the pixel alpha.
    CHECK(b.alpha[center] > 0.5);
    CHECK(backward_features<double>(b, g).row(0).isApprox(b.alpha[center] * up));

    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto scene = testing::random_scene(30, 60 + seed);
        const Camera c2 = testing::random_camera(16, 16, 70 + seed);
        const FeatureStoreD f0 = testing::random_features(30, 80 + seed);
        Rng rng(seed);
        std::vector<double> gp(c2.pixel_count() * kFeatureDim);
        for (double& v : gp) v = uniform01(rng) - 0.5;
        const auto phi = [&](const Eigen::MatrixXd& x) {
            const auto r = render(scene, FeatureStoreD(FeatureStoreD::Matrix(x)), c2);
            return std::inner_product(gp.begin(), gp.end(), r.feature_fine.begin(), 0.0);
        };
        const Eigen::MatrixXd analytic = backward_features<double>(render(scene, f0, c2), gp);
        CHECK(oracle::relative_error(analytic, oracle::finite_difference(phi, f0.matrix())) < 1e-4);
    }
}

TEST_CASE("buffer dump round trip") {
    testing::TempDir dir;
    const auto scene = testing::random_scene(100, 1);
    const RenderBuffers b = render(scene, testing::random_features(100, 2).cast<float>(), testing::random_camera(20, 12, 3));
    dump_buffers(b, dir / "b.cgrb");
    CHECK(std::filesystem::file_size(dir / "b.cgrb") == 16 + 20 * 12 * 40 * 4);
    const RenderBuffers back = load_buffer_dump(dir / "b.cgrb");
    CHECK(back.color == b.color);
    CHECK(back.feature_fine == b.feature_fine);
    CHECK(back.feature_coarse == b.feature_coarse);
    CHECK(back.alpha == b.alpha);
}
