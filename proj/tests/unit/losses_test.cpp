#include "cgseg/error.hpp"
#include "cgseg/kdtree.hpp"
#include "cgseg/losses.hpp"
#include "cgseg/oracle/metrics.hpp"
#include "cgseg/random.hpp"

#include <doctest.h>

using namespace cgseg;

namespace {

RowMatrixD random_rows(Eigen::Index n, std::uint64_t seed) {
    Rng rng(seed);
    RowMatrixD x(n, kFeatureDim);
    for (Eigen::Index i = 0; i < n; ++i)
        for (int d = 0; d < kFeatureDim; ++d) x(i, d) = 2.0 * uniform01(rng) - 1.0;
    return x;
}

PixelBatch batch_of(RowMatrixD f, std::vector<std::int32_t> coarse, std::vector<std::int32_t> fine) {
    PixelBatch b;
    b.features = std::move(f);
    b.coarse_ids = std::move(coarse);
    b.fine_ids = std::move(fine);
    for (std::size_t p = 0; p < b.coarse_ids.size(); ++p) b.pixels.push_back(static_cast<std::uint32_t>(p));
    return b;
}

GlobalCluster cluster(std::uint32_t id, Eigen::VectorXf rep) { return {id, 5, std::move(rep)}; }

} // namespace

TEST_CASE("contrastive: identical same-ID pixels give -2 and no gradient") {
    RowMatrixD f = random_rows(1, 1);
    RowMatrixD two(2, kFeatureDim);
    two << f, f;
    const auto r = contrastive_loss(batch_of(two, {1, 1}, {5, 5}), TrainConfig{});
    CHECK(r.pos == doctest::Approx(-2.0));
    CHECK(r.neg == 0.0);
    CHECK(r.grad.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("contrastive: orthogonal different-ID pixels are below both margins") {
    RowMatrixD two = RowMatrixD::Zero(2, kFeatureDim);
    two(0, 0) = 1.0;
    two(0, 12) = 1.0;
    two(1, 1) = 1.0;
    two(1, 13) = 1.0;
    const auto r = contrastive_loss(batch_of(two, {1, 2}, {3, 4}), TrainConfig{});
    CHECK(r.neg == 0.0);
    // Only the two self pairs per level are positive: -(1 + 1)/4 per level.
    CHECK(r.pos == doctest::Approx(-1.0));
}

TEST_CASE("contrastive: finite differences (independent layout has no stop-gradient)") {
    TrainConfig cfg;
    cfg.layout = FeatureLayout::Independent;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        RowMatrixD x0 = random_rows(12, 10 + seed);
        for (int p = 1; p < 12; p += 2) x0.row(p) = x0.row(p - 1) + 0.2 * random_rows(1, 50 + seed * 12 + p);
        const PixelBatch b = batch_of(x0, {1, 1, 2, 2, 3, 3, 1, 1, 2, 2, 3, 3}, {1, 2, 3, 4, 5, 6, 1, 2, 3, 4, 5, 6});
        const auto value = [&](const Eigen::MatrixXd& x) {
            PixelBatch bb = b;
            bb.features = x;
            return contrastive_loss(bb, cfg).total;
        };
        CHECK(oracle::relative_error(contrastive_loss(b, cfg).grad, oracle::finite_difference(value, x0)) < 1e-4);
    }
}

TEST_CASE("contrastive: mismatched batch arrays are a contract violation") {
    CHECK_THROWS_AS(contrastive_loss(batch_of(random_rows(3, 1), {1, 2}, {1, 2, 3}), TrainConfig{}), Error);
}

TEST_CASE("gfl: self match and threshold gate") {
    TrainConfig cfg;
    RowMatrixD x = random_rows(1, 4);
    GlobalClusters cl;
    cl.coarse.push_back(cluster(1, x.row(0).head<kCoarseDim>().normalized().cast<float>().transpose()));
    const auto r = gfl_loss(x, cl, cfg, nullptr, false);
    CHECK(r.pos == doctest::Approx(-1.0));
    CHECK(r.neg == 0.0);

    // Cosine 0.5 against the only cluster: below tau_g, and no other cluster for the negative term.
    RowMatrixD y = RowMatrixD::Zero(1, kFeatureDim);
    y(0, 0) = 0.5;
    y(0, 1) = std::sqrt(0.75);
    Eigen::VectorXf rep = Eigen::VectorXf::Zero(kCoarseDim);
    rep[0] = 1.0f;
    GlobalClusters one;
    one.coarse.push_back(cluster(1, rep));
    CHECK(gfl_loss(y, one, cfg, nullptr, false).pos == 0.0);
}

TEST_CASE("gfl: levels without clusters contribute nothing") {
    const auto r = gfl_loss(random_rows(5, 2), GlobalClusters{}, TrainConfig{}, nullptr, false);
    CHECK(r.value == 0.0);
    CHECK(r.grad.isZero());
}

TEST_CASE("gfl: finite differences with the argmax frozen") {
    TrainConfig cfg;
    Rng rng(8);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        GlobalClusters cl;
        RowMatrixD centers = random_rows(3, 100 + seed);
        for (std::uint32_t c = 0; c < 3; ++c) {
            cl.coarse.push_back(cluster(c + 1, centers.row(c).head<kCoarseDim>().normalized().cast<float>().transpose()));
            cl.fine.push_back(cluster(c + 1, centers.row(c).normalized().cast<float>().transpose()));
        }
        RowMatrixD x0(15, kFeatureDim);
        for (Eigen::Index i = 0; i < 15; ++i) x0.row(i) = centers.row(i % 3) + 0.2 * random_rows(1, 200 + seed * 15 + i);
        const GflAssignment frozen = gfl_assign(x0, cl, cfg.layout);
        const auto value = [&](const Eigen::MatrixXd& x) { return gfl_loss(x, cl, cfg, &frozen).value; };
        CHECK(oracle::relative_error(gfl_loss(x0, cl, cfg, &frozen).grad, oracle::finite_difference(value, x0)) < 1e-4);
    }
}

TEST_CASE("regularizers: closed forms") {
    RowMatrixD unit = random_rows(6, 3);
    for (Eigen::Index i = 0; i < 6; ++i) {
        unit.row(i).head<kCoarseDim>().normalize();
        unit.row(i).tail<kExtraDim>().normalize();
    }
    CHECK(hypersphere_loss(unit).value == doctest::Approx(0.0));

    // One pixel blending the same unit-per-half feature with weights 0.6 + 0.4.
    RenderBuffersD b;
    b.width = b.height = 1;
    b.feature_fine.assign(kFeatureDim, 0.0);
    for (int d = 0; d < kFeatureDim; ++d) b.feature_fine[static_cast<std::size_t>(d)] = (0.6 + 0.4) * unit(0, d);
    b.feature_coarse.assign(b.feature_fine.begin(), b.feature_fine.begin() + kCoarseDim);
    CHECK(b.fine_at(0).norm() == doctest::Approx(std::sqrt(2.0)));
    CHECK(rendered_norm_loss(b, FeatureLayout::SharedPrior).value == doctest::Approx(0.0));
    CHECK(rendered_norm_loss(b, FeatureLayout::Independent).value == doctest::Approx(0.0));

    // Identical neighbours: spatial term is exactly -1.
    RowMatrixD same(4, kFeatureDim);
    for (Eigen::Index i = 0; i < 4; ++i) same.row(i) = unit.row(0) * (1.0 + static_cast<double>(i));
    const std::vector<std::uint32_t> nb = {1, 2, 0, 3, 1, 0, 2, 1};
    CHECK(spatial_loss(same, {0, 1, 2, 3}, nb, 2).value == doctest::Approx(-1.0));
}

TEST_CASE("regularizers: finite differences") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const RowMatrixD x0 = random_rows(10, 20 + seed);
        const auto hs = [&](const Eigen::MatrixXd& x) { return hypersphere_loss(x).value; };
        CHECK(oracle::relative_error(hypersphere_loss(x0).grad, oracle::finite_difference(hs, x0)) < 1e-4);

        Rng rng(seed);
        std::vector<Eigen::Vector3f> pts(10);
        for (auto& p : pts) p = Eigen::Vector3f(uniform01(rng), uniform01(rng), uniform01(rng));
        const auto nb = KdTree(pts).knn_all(3);
        const auto samples = sample_indices(10, 6, seed);
        const auto sp = [&](const Eigen::MatrixXd& x) { return spatial_loss(x, samples, nb, 3).value; };
        CHECK(oracle::relative_error(spatial_loss(x0, samples, nb, 3).grad, oracle::finite_difference(sp, x0)) < 1e-4);

        RenderBuffersD b;
        b.width = 3;
        b.height = 2;
        const RowMatrixD px = random_rows(6, 40 + seed);
        b.feature_fine.assign(px.data(), px.data() + px.size());
        const auto rn = [&](const Eigen::MatrixXd& x) {
            RenderBuffersD bb = b;
            const RowMatrixD r = x;
            bb.feature_fine.assign(r.data(), r.data() + r.size());
            return rendered_norm_loss(bb, FeatureLayout::SharedPrior).value;
        };
        const auto analytic = rendered_norm_loss(b, FeatureLayout::SharedPrior).grad_pixels;
        const RowMatrixD grad = Eigen::Map<const RowMatrixD>(analytic.data(), 6, kFeatureDim);
        CHECK(oracle::relative_error(grad, oracle::finite_difference(rn, px)) < 1e-4);
    }
}
