#include "cgseg/error.hpp"
#include "cgseg/oracle/evaluation.hpp"
#include "cgseg/oracle/synthetic.hpp"

#include "support/temp_dir.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

using namespace cgseg;

namespace {

oracle::SyntheticSpec small_spec() {
    oracle::SyntheticSpec spec;
    spec.objects = 2;
    spec.parts_per_object = 2;
    spec.gaussians_per_part = 50;
    spec.train_views = 8;
    spec.heldout_views = 2;
    spec.width = spec.height = 64;
    return spec;
}

std::set<std::int32_t> distinct(const std::vector<std::int32_t>& ids) {
    std::set<std::int32_t> out(ids.begin(), ids.end());
    out.erase(0);
    return out;
}

// True when a and b induce the same partition of the pixels.
bool same_partition(const std::vector<std::int32_t>& a, const std::vector<std::int32_t>& b) {
    std::map<std::int32_t, std::int32_t> ab, ba;
    for (std::size_t p = 0; p < a.size(); ++p) {
        if (ab.emplace(a[p], b[p]).first->second != b[p]) return false;
        if (ba.emplace(b[p], a[p]).first->second != a[p]) return false;
    }
    return true;
}

} // namespace

TEST_CASE("synthetic: clean views hold two objects and four parts") {
    const auto s = oracle::generate(small_spec());
    CHECK(s.scene.size() == 200);
    CHECK(s.cameras.size() == 10);
    CHECK(s.train_views.size() == 8);
    CHECK(oracle::region_count(s, Level::Coarse) == 2);
    CHECK(oracle::region_count(s, Level::Fine) == 4);
    const auto views = oracle::training_views(s);
    REQUIRE(views.size() == 8);
    for (const auto& v : views) {
        CHECK(distinct(v.mask.coarse).size() == 2);
        CHECK(distinct(v.mask.fine).size() == 4);
    }
    const auto truth = oracle::gaussian_truth(s, Level::Fine);
    CHECK(std::set<std::uint32_t>(truth.begin(), truth.end()).size() == 4);
}

TEST_CASE("synthetic: generation is deterministic in the seed") {
    const auto a = oracle::generate(small_spec());
    const auto b = oracle::generate(small_spec());
    CHECK(a.scene.positions == b.scene.positions);
    CHECK(a.segments == b.segments);
    auto spec = small_spec();
    spec.seed = 2;
    CHECK(oracle::generate(spec).scene.positions != a.scene.positions);
}

TEST_CASE("synthetic: id permutation relabels without changing partitions") {
    const auto clean = oracle::training_views(oracle::generate(small_spec()));
    auto spec = small_spec();
    spec.noise.id_permutation = true;
    const auto permuted = oracle::training_views(oracle::generate(spec));
    REQUIRE(clean.size() == permuted.size());
    std::set<std::vector<std::int32_t>> local_orders;
    for (std::size_t v = 0; v < clean.size(); ++v) {
        for (Level lv : kLevels) CHECK(same_partition(clean[v].mask.at(lv), permuted[v].mask.at(lv)));
        std::vector<std::int32_t> order;
        for (auto id : permuted[v].mask.fine) order.push_back(id ? local_segment_id(id) : 0);
        local_orders.insert(order);
    }
    CHECK(local_orders.size() > 1);
}

TEST_CASE("synthetic: split events follow the binomial") {
    auto spec = small_spec();
    spec.train_views = 20;
    spec.noise.split_prob = 0.2;
    const auto s = oracle::generate(spec);
    REQUIRE(s.split_events.size() == 20);
    std::size_t events = 0, trials = 0;
    for (std::size_t v = 0; v < s.split_events.size(); ++v) {
        const auto& parts = s.part_maps[v];
        for (std::size_t g = 0; g < s.part_count(); ++g) {
            if (std::find(parts.begin(), parts.end(), g + 1) == parts.end()) continue;
            ++trials;
            events += s.split_events[v][g];
        }
    }
    REQUIRE(trials > 40);
    const double mean = 0.2 * static_cast<double>(trials);
    const double sigma = std::sqrt(mean * 0.8);
    CHECK(std::abs(static_cast<double>(events) - mean) <= 2.0 * sigma);
}

TEST_CASE("synthetic: write and load round trip") {
    testing::TempDir dir;
    const auto s = oracle::generate(small_spec());
    oracle::write_synthetic(s, dir.path());
    const auto back = oracle::load_synthetic(dir.path());
    CHECK(back.scene.size() == s.scene.size());
    CHECK(back.object_of == s.object_of);
    CHECK(back.part_of == s.part_of);
    CHECK(back.object_maps == s.object_maps);
    CHECK(back.segments == s.segments);
    CHECK(back.cameras.size() == s.cameras.size());
}
