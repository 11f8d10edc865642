#include "cgseg/error.hpp"
#include "cgseg/clusters.hpp"
#include "cgseg/hdbscan.hpp"
#include "cgseg/kdtree.hpp"
#include "cgseg/random.hpp"

#include "support/hdbscan_oracle.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>

using namespace cgseg;

namespace {

std::vector<PooledSegmentFeature> pooled_from(const Eigen::MatrixXd& x, Level level) {
    std::vector<PooledSegmentFeature> out;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        out.push_back({level, static_cast<std::uint32_t>(r / 3), static_cast<std::int32_t>(r), x.row(r).transpose(), 100});
    }
    return out;
}

// Two tight blobs of 20 unit vectors whose centers have cosine 0.5.
Eigen::MatrixXd two_blobs(std::uint64_t seed) {
    Rng rng(seed);
    Eigen::VectorXd a = Eigen::VectorXd::Zero(kCoarseDim), b = a;
    a[0] = 1.0;
    b[0] = 0.5;
    b[1] = std::sqrt(0.75);
    Eigen::MatrixXd x(40, kCoarseDim);
    for (Eigen::Index r = 0; r < 40; ++r) {
        Eigen::VectorXd v = r < 20 ? a : b;
        for (int d = 0; d < kCoarseDim; ++d) v[d] += 0.01 * standard_normal(rng);
        x.row(r) = v.normalized().transpose();
    }
    return x;
}

} // namespace

TEST_CASE("hdbscan: two tight blobs give two clusters, matching the oracle") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Eigen::MatrixXd x = two_blobs(seed);
        const auto labels = hdbscan(x, {5, 5, 0.0});
        const auto sets = testing::member_sets(labels);
        CHECK(sets.size() == 2);
        CHECK(sets == testing::exhaustive_hdbscan(x, 5, 5, 0.0));
        CHECK(std::all_of(labels.begin(), labels.begin() + 20, [&](auto l) { return l == labels[0]; }));
    }
}

TEST_CASE("hdbscan: isolated points are noise; small inputs are noise") {
    Eigen::MatrixXd x(3, 2);
    x << 0, 0, 10, 0, 0, 17;
    const auto labels = hdbscan(x, {2, 2, 0.0});
    CHECK(std::all_of(labels.begin(), labels.end(), [](auto l) { return l == 0; }));
    CHECK(hdbscan(x.topRows(1), {2, 0, 0.0}) == std::vector<std::uint32_t>{0});
    CHECK_THROWS_AS(hdbscan(x, {1, 0, 0.0}), Error);
}

TEST_CASE("hdbscan: a set within epsilon forms one cluster") {
    Eigen::MatrixXd same = Eigen::MatrixXd::Ones(8, 3);
    const auto labels = hdbscan(same, {5, 5, 1e-2});
    CHECK(std::all_of(labels.begin(), labels.end(), [](auto l) { return l == 1; }));
}

TEST_CASE("hdbscan: randomized agreement with the exhaustive oracle") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        Rng rng(seed);
        const int n = 6 + static_cast<int>(uniform_below(rng, 40));
        Eigen::MatrixXd x(n, 3);
        for (int i = 0; i < n; ++i)
            for (int d = 0; d < 3; ++d) {
                x(i, d) = seed % 2 ? static_cast<double>(uniform_below(rng, 3)) : (i % 3) * 4.0 + standard_normal(rng);
            }
        const int mcs = 2 + static_cast<int>(uniform_below(rng, 5));
        const double eps = seed % 3 == 0 ? 0.5 * uniform01(rng) : 0.0;
        CHECK(testing::member_sets(hdbscan(x, {mcs, 0, eps})) == testing::exhaustive_hdbscan(x, mcs, 0, eps));
    }
}

TEST_CASE("mutual reachability: core distance counts the point itself") {
    Eigen::MatrixXd x(3, 1);
    x << 0, 1, 3;
    const Eigen::MatrixXd m = mutual_reachability(x, 2);
    CHECK(m(0, 1) == doctest::Approx(1.0));
    CHECK(m(1, 2) == doctest::Approx(2.0));
    CHECK(m(0, 2) == doctest::Approx(3.0));
}

TEST_CASE("cluster_level: identical points give one cluster at that point") {
    Eigen::MatrixXd x(10, kCoarseDim);
    Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(kCoarseDim, -1.0, 2.0).normalized();
    for (Eigen::Index r = 0; r < 10; ++r) x.row(r) = v.transpose();
    const auto r = cluster_level(pooled_from(x, Level::Coarse), Level::Coarse, FeatureLayout::SharedPrior, 1e-2, 5);
    REQUIRE(r.clusters.size() == 1);
    CHECK(r.clusters[0].member_count == 10);
    CHECK(r.clusters[0].representative.cast<double>().isApprox(v, 1e-6));
}

TEST_CASE("cluster_level: ids by size then first member, invariant to input order") {
    Eigen::MatrixXd x = two_blobs(3);
    // Drop 5 points of the first blob so sizes differ (15 vs 20).
    Eigen::MatrixXd y(35, kCoarseDim);
    y << x.middleRows(5, 15), x.bottomRows(20);
    auto pooled = pooled_from(y, Level::Coarse);
    const auto ref = cluster_level(pooled, Level::Coarse, FeatureLayout::SharedPrior, 1e-2, 5);
    REQUIRE(ref.clusters.size() == 2);
    CHECK(ref.clusters[0].member_count == 20);
    CHECK(ref.clusters[1].member_count == 15);
    CHECK(ref.labels[0] == 2);
    CHECK(ref.labels[34] == 1);

    std::map<std::int32_t, std::uint32_t> by_segment;
    for (std::size_t k = 0; k < pooled.size(); ++k) by_segment[pooled[k].segment_id] = ref.labels[k];
    Rng rng(1);
    for (std::size_t i = pooled.size(); i > 1; --i) std::swap(pooled[i - 1], pooled[uniform_below(rng, i)]);
    const auto shuffled = cluster_level(pooled, Level::Coarse, FeatureLayout::SharedPrior, 1e-2, 5);
    REQUIRE(shuffled.clusters.size() == 2);
    for (std::size_t k = 0; k < pooled.size(); ++k) CHECK(shuffled.labels[k] == by_segment[pooled[k].segment_id]);
    for (std::size_t c = 0; c < 2; ++c) {
        CHECK(shuffled.clusters[c].representative.isApprox(ref.clusters[c].representative, 1e-5f));
    }
}

TEST_CASE("pool_segment_features: constant and split means") {
    RenderBuffers rb;
    rb.width = 4;
    rb.height = 5;
    rb.feature_fine.assign(20 * kFeatureDim, 0.0f);
    TwoLevelMask m;
    m.width = 4;
    m.height = 5;
    m.coarse.assign(20, 1);
    m.fine.assign(20, 0);
    for (std::size_t p = 0; p < 20; ++p) {
        for (int d = 0; d < kFeatureDim; ++d) rb.feature_fine[p * kFeatureDim + d] = p < 10 ? 1.0f : 3.0f;
        m.fine[p] = p < 16 ? 2 : 0;
    }
    const auto pooled = pool_segment_features({&rb}, {&m}, FeatureLayout::SharedPrior);
    REQUIRE(pooled.size() == 2);
    CHECK(pooled[0].level == Level::Coarse);
    CHECK(pooled[0].mean_feature.size() == kCoarseDim);
    CHECK(pooled[0].mean_feature[0] == doctest::Approx(2.0));
    CHECK(pooled[1].pixel_count == 16);
    CHECK(pooled[1].mean_feature.size() == kFeatureDim);
    CHECK(pooled[1].mean_feature[5] == doctest::Approx((10.0 + 18.0) / 16.0));
}

TEST_CASE("kdtree: geometry, brute force and ties") {
    const KdTree line({{0, 0, 0}, {1, 0, 0}, {3, 0, 0}});
    CHECK(line.knn(1, 1) == std::vector<std::uint32_t>{0});

    Rng rng(5);
    std::vector<Eigen::Vector3f> pts(1000);
    for (auto& p : pts) p = Eigen::Vector3f(uniform01(rng), uniform01(rng), uniform01(rng));
    const KdTree tree(pts);
    const auto all = tree.knn_all(5);
    for (std::uint32_t q = 0; q < pts.size(); q += 37) {
        std::vector<std::pair<double, std::uint32_t>> d;
        for (std::uint32_t i = 0; i < pts.size(); ++i) {
            if (i != q) d.emplace_back((pts[i].cast<double>() - pts[q].cast<double>()).squaredNorm(), i);
        }
        std::sort(d.begin(), d.end());
        for (int j = 0; j < 5; ++j) CHECK(all[q * 5 + static_cast<std::size_t>(j)] == d[static_cast<std::size_t>(j)].second);
    }

    std::vector<Eigen::Vector3f> dup(6, Eigen::Vector3f(1, 2, 3));
    const KdTree dt(dup);
    CHECK(dt.knn(3, 4) == std::vector<std::uint32_t>{0, 1, 2, 4});
    CHECK(dt.knn(0, 5) == std::vector<std::uint32_t>{1, 2, 3, 4, 5});
}
