#include "cgseg/error.hpp"
#include "cgseg/io/png.hpp"
#include "cgseg/masks.hpp"
#include "cgseg/oracle/synthetic.hpp"
#include "cgseg/random.hpp"

#include "support/temp_dir.hpp"

#include <doctest.h>

#include <algorithm>
#include <fstream>

using namespace cgseg;

namespace {

std::vector<std::uint8_t> rect(int w, int h, int x0, int y0, int rw, int rh) {
    std::vector<std::uint8_t> m(static_cast<std::size_t>(w * h), 0);
    for (int y = y0; y < y0 + rh; ++y)
        for (int x = x0; x < x0 + rw; ++x) m[static_cast<std::size_t>(y * w + x)] = 1;
    return m;
}

RawSegments random_segments(std::uint64_t seed, std::uint32_t view) {
    Rng rng(seed);
    RawSegments raw{view, 40, 30, {}};
    const int count = 1 + static_cast<int>(uniform_below(rng, 8));
    for (int k = 0; k < count; ++k) {
        const int x0 = static_cast<int>(uniform_below(rng, 40)), y0 = static_cast<int>(uniform_below(rng, 30));
        const int rw = 1 + static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(40 - x0)));
        const int rh = 1 + static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(30 - y0)));
        raw.segments.push_back(make_segment(global_segment_id(view, k + 1), 40, 30, rect(40, 30, x0, y0, rw, rh)));
    }
    return raw;
}

} // namespace

TEST_CASE("rle: round trip and validation") {
    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
        std::vector<std::uint8_t> bits(1 + uniform_below(rng, 300));
        for (auto& b : bits) b = uniform01(rng) < 0.3;
        const auto rle = encode_rle(bits);
        CHECK(decode_rle(rle, bits.size()) == bits);
    }
    CHECK(encode_rle(std::vector<std::uint8_t>{1, 1, 0}) == std::vector<std::uint32_t>{0, 2, 1});
    CHECK_THROWS_AS(decode_rle(std::vector<std::uint32_t>{2, 2}, 5), Error);
}

TEST_CASE("segments: tight bbox and decode") {
    const auto mask = rect(20, 10, 3, 2, 5, 4);
    const RawSegment s = make_segment(9, 20, 10, mask);
    CHECK(s.area == 20);
    CHECK(s.bbox == BBox{3, 2, 5, 4});
    CHECK(decode_segment(s, 20, 10) == mask);
    const RawSegment empty = make_segment(4, 20, 10, std::vector<std::uint8_t>(200, 0));
    CHECK(empty.area == 0);
}

TEST_CASE("assign_levels: larger segment is coarse, smaller is fine") {
    const int w = 50, h = 40;
    RawSegments raw{0, w, h, {}};
    raw.segments.push_back(make_segment(1, w, h, rect(w, h, 0, 0, 50, 20)));  // area 1000
    raw.segments.push_back(make_segment(2, w, h, rect(w, h, 10, 5, 10, 5)));  // area 50, inside
    raw.segments.push_back(make_segment(3, w, h, rect(w, h, 0, 30, 10, 10))); // alone
    const TwoLevelMask m = assign_levels(raw);
    const auto at = [&](int x, int y) { return static_cast<std::size_t>(y * w + x); };
    CHECK(m.coarse[at(12, 7)] == 1);
    CHECK(m.fine[at(12, 7)] == 2);
    CHECK(m.coarse[at(40, 1)] == 1);
    CHECK(m.fine[at(40, 1)] == 1);
    CHECK(m.coarse[at(5, 35)] == 3);
    CHECK(m.fine[at(5, 35)] == 3);
    CHECK(m.coarse[at(40, 35)] == 0);
    CHECK(m.fine[at(40, 35)] == 0);
}

TEST_CASE("assign_levels: equal areas pick the lower id at both levels") {
    RawSegments raw{0, 10, 10, {}};
    raw.segments.push_back(make_segment(7, 10, 10, rect(10, 10, 0, 0, 5, 4)));
    raw.segments.push_back(make_segment(3, 10, 10, rect(10, 10, 2, 2, 5, 4)));
    const TwoLevelMask m = assign_levels(raw);
    CHECK(m.coarse[3 * 10 + 3] == 3);
    CHECK(m.fine[3 * 10 + 3] == 3);
}

TEST_CASE("assign_levels: independent of segment order") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        RawSegments raw = random_segments(seed, 2);
        const TwoLevelMask ref = assign_levels(raw);
        Rng rng(seed + 100);
        for (int t = 0; t < 5; ++t) {
            for (std::size_t i = raw.segments.size(); i > 1; --i) std::swap(raw.segments[i - 1], raw.segments[uniform_below(rng, i)]);
            CHECK(assign_levels(raw) == ref);
        }
    }
}

TEST_CASE("cgsg: empty list, full frame, random sets") {
    testing::TempDir dir;
    RawSegments empty{3, 16, 8, {}};
    save_segments(empty, dir / "empty.cgsg");
    const RawSegments e2 = load_segment_file(dir / "empty.cgsg");
    CHECK(e2 == empty);
    const TwoLevelMask em = assign_levels(e2);
    CHECK(std::all_of(em.coarse.begin(), em.coarse.end(), [](auto v) { return v == 0; }));

    RawSegments full{5, 16, 8, {make_segment(global_segment_id(5, 4), 16, 8, std::vector<std::uint8_t>(128, 1))}};
    save_segments(full, dir / "full.cgsg");
    const TwoLevelMask fm = assign_levels(load_segment_file(dir / "full.cgsg"));
    CHECK(std::all_of(fm.coarse.begin(), fm.coarse.end(), [](auto v) { return v == global_segment_id(5, 4); }));

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const RawSegments raw = random_segments(seed, static_cast<std::uint32_t>(seed));
        save_segments(raw, dir / "r.cgsg");
        CHECK(load_segment_file(dir / "r.cgsg") == raw);
    }
}

TEST_CASE("cgsg: corrupt files are format errors") {
    testing::TempDir dir;
    const RawSegments raw = random_segments(4, 1);
    save_segments(raw, dir / "r.cgsg");
    std::filesystem::resize_file(dir / "r.cgsg", std::filesystem::file_size(dir / "r.cgsg") - 4);
    CHECK_THROWS_AS(load_segment_file(dir / "r.cgsg"), Error);
    {
        std::ofstream out(dir / "bad.cgsg", std::ios::binary);
        out << "NOPE0000000000000000";
    }
    CHECK_THROWS_AS(load_segment_file(dir / "bad.cgsg"), Error);
}

TEST_CASE("synthetic mask set round-trips bit-exact") {
    testing::TempDir dir;
    oracle::SyntheticSpec spec;
    spec.train_views = 6;
    spec.heldout_views = 1;
    spec.width = spec.height = 64;
    spec.noise = {true, 0.2, 0.2, 2};
    const auto s = oracle::generate(spec);
    std::filesystem::create_directories(dir / "masks");
    for (const auto& raw : s.segments) {
        save_segments(raw, dir.path() / "masks" / ("view_" + std::to_string(raw.view_id) + ".cgsg"));
        const TwoLevelMask m = assign_levels(raw);
        save_two_level(m, dir.path() / "masks");
        CHECK(load_two_level(dir.path() / "masks", raw.view_id) == m);
    }
    const auto back = load_segments(dir.path() / "masks");
    REQUIRE(back.size() == s.segments.size());
    for (std::size_t v = 0; v < back.size(); ++v) CHECK(back[v] == s.segments[v]);
}

TEST_CASE("sam folder import") {
    testing::TempDir dir;
    io::Image8 a{8, 4, 1, std::vector<std::uint8_t>(32, 0)}, b = a;
    for (int x = 0; x < 4; ++x) a.pixels[static_cast<std::size_t>(x)] = 255;
    for (int x = 0; x < 8; ++x) b.pixels[static_cast<std::size_t>(8 + x)] = 255;
    io::write_png(a, dir / "0.png");
    io::write_png(b, dir / "1.png");
    CHECK_THROWS_AS(import_sam_folder(dir.path(), 2), Error); // no metadata.csv yet
    std::ofstream(dir / "metadata.csv") << "id,area\n0,4\n1,8\n";
    const RawSegments raw = import_sam_folder(dir.path(), 2);
    REQUIRE(raw.segments.size() == 2);
    CHECK(raw.segments[0].id == global_segment_id(2, 1));
    CHECK(raw.segments[0].area == 4);
    CHECK(raw.segments[1].id == global_segment_id(2, 2));
    CHECK(raw.segments[1].bbox == BBox{0, 1, 8, 1});
}
