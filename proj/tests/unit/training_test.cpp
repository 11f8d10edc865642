#include "cgseg/error.hpp"
#include "cgseg/oracle/evaluation.hpp"
#include "cgseg/training.hpp"

#include <doctest.h>

using namespace cgseg;

namespace {

oracle::SyntheticScene small_scene() {
    oracle::SyntheticSpec spec;
    spec.objects = 2;
    spec.parts_per_object = 1;
    spec.gaussians_per_part = 60;
    spec.train_views = 8;
    spec.heldout_views = 0;
    spec.width = spec.height = 64;
    return oracle::generate(spec);
}

double mean_cosine(const FeatureStore& f, const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
    double sum = 0.0;
    for (auto i : a)
        for (auto j : b) sum += f.row(i).normalized().dot(f.row(j).normalized());
    return sum / static_cast<double>(a.size() * b.size());
}

} // namespace

TEST_CASE("train: zero iterations returns the initial features") {
    const auto s = small_scene();
    TrainConfig cfg;
    cfg.iterations = 0;
    cfg.seed = 9;
    const TrainResult r = train(s.scene, oracle::training_views(s), cfg);
    CHECK(r.checkpoint.features == init_features(s.scene.size(), 9));
    CHECK(r.checkpoint.iteration == 0);
    CHECK(r.checkpoint.config_digest == config_digest(cfg));
}

TEST_CASE("train: features separate two objects") {
    const auto s = small_scene();
    TrainConfig cfg;
    cfg.iterations = 600;
    cfg.gfl_start = 400;
    cfg.pixels_per_iter = 512;
    cfg.seed = 3;
    std::vector<TrainLogEntry> seen;
    TrainOptions options;
    options.on_log = [&](const TrainLogEntry& e) { seen.push_back(e); };
    const TrainResult r = train(s.scene, oracle::training_views(s), cfg, options);
    REQUIRE_FALSE(r.log.empty());
    CHECK(seen.size() == r.log.size());
    CHECK(r.log.back().iteration == 599);
    CHECK(r.log.back().total < r.log.front().total);

    std::vector<std::uint32_t> a, b;
    for (std::uint32_t i = 0; i < s.object_of.size(); ++i) (s.object_of[i] == 0 ? a : b).push_back(i);
    const auto& f = r.checkpoint.features;
    CHECK(mean_cosine(f, a, a) >= 0.95);
    CHECK(mean_cosine(f, b, b) >= 0.95);
    CHECK(mean_cosine(f, a, b) <= 0.75);
    CHECK(r.checkpoint.clusters.at(Level::Coarse).size() >= 2);
}

TEST_CASE("train: rejects views with no assigned pixels") {
    const auto s = small_scene();
    auto views = oracle::training_views(s);
    for (auto& v : views) {
        std::fill(v.mask.coarse.begin(), v.mask.coarse.end(), 0);
        std::fill(v.mask.fine.begin(), v.mask.fine.end(), 0);
    }
    TrainConfig cfg;
    cfg.iterations = 5;
    CHECK_THROWS(train(s.scene, views, cfg));
}
