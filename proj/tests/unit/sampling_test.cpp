#include "cgseg/error.hpp"
#include "cgseg/random.hpp"
#include "cgseg/training.hpp"

#include <doctest.h>

#include <cmath>

using namespace cgseg;

namespace {

TwoLevelMask two_segments(int small_area) {
    TwoLevelMask m;
    m.width = 100;
    m.height = 100;
    m.coarse.assign(10000, 1);
    m.fine.assign(10000, 2);
    for (int p = 0; p < small_area; ++p) m.fine[static_cast<std::size_t>(p)] = 3;
    return m;
}

// Exact expected number of small-segment draws under successive sampling
// proportional to weight: DP over how many small pixels are already taken.
double expected_small(int small, int large, double w_small, double w_large, int n) {
    std::vector<double> prob(static_cast<std::size_t>(n + 1), 0.0);
    prob[0] = 1.0;
    double expected = 0.0;
    for (int d = 0; d < n; ++d) {
        std::vector<double> next(prob.size(), 0.0);
        for (int k = 0; k <= d; ++k) {
            if (prob[static_cast<std::size_t>(k)] == 0.0) continue;
            const double ws = (small - k) * w_small, wl = (large - (d - k)) * w_large;
            const double ps = ws / (ws + wl);
            expected += prob[static_cast<std::size_t>(k)] * ps;
            next[static_cast<std::size_t>(k + 1)] += prob[static_cast<std::size_t>(k)] * ps;
            next[static_cast<std::size_t>(k)] += prob[static_cast<std::size_t>(k)] * (1.0 - ps);
        }
        prob.swap(next);
    }
    return expected;
}

} // namespace

TEST_CASE("sampling: weights are inverse fine area, max-normalized") {
    const TwoLevelMask m = two_segments(100);
    const auto w = sampling_weights(m);
    CHECK(w[0] == doctest::Approx(1.0));
    CHECK(w[5000] == doctest::Approx(100.0 / 9900.0));
    TwoLevelMask partial = m;
    partial.coarse[1] = 0;
    CHECK(sampling_weights(partial)[1] == 0.0);
}

TEST_CASE("sampling: small segment draws match the closed form") {
    const TwoLevelMask m = two_segments(100);
    const double want = expected_small(100, 9900, 1.0, 100.0 / 9900.0, 100);
    CHECK(want >= 40.0);
    double sum = 0.0, sum2 = 0.0;
    const int seeds = 1000;
    for (int s = 0; s < seeds; ++s) {
        const auto picked = sample_pixels(m, 100, static_cast<std::uint64_t>(s));
        REQUIRE(picked.size() == 100);
        double small = 0.0;
        for (auto p : picked) small += m.fine[p] == 3;
        sum += small;
        sum2 += small * small;
    }
    const double mean = sum / seeds, var = sum2 / seeds - mean * mean;
    CHECK(std::abs(mean - want) <= 4.0 * std::sqrt(var / seeds));
}

TEST_CASE("sampling: one segment is uniform") {
    TwoLevelMask m;
    m.width = 20;
    m.height = 10;
    m.coarse.assign(200, 1);
    m.fine.assign(200, 1);
    std::vector<int> hits(200, 0);
    const int seeds = 2000, n = 20;
    for (int s = 0; s < seeds; ++s) {
        for (auto p : sample_pixels(m, n, static_cast<std::uint64_t>(s))) ++hits[p];
    }
    const double p = static_cast<double>(n) / 200.0, mean = seeds * p, sd = std::sqrt(seeds * p * (1.0 - p));
    for (int h : hits) CHECK(std::abs(h - mean) <= 5.0 * sd);
}

TEST_CASE("sampling: saturation, order, determinism") {
    TwoLevelMask m = two_segments(10);
    for (std::size_t p = 50; p < m.fine.size(); ++p) m.fine[p] = 0;
    const auto all = sample_pixels(m, 1000, 1);
    CHECK(all.size() == 50);
    const TwoLevelMask big = two_segments(100);
    const auto a = sample_pixels(big, 300, 9);
    CHECK(std::is_sorted(a.begin(), a.end()));
    CHECK(sample_pixels(big, 300, 9) == a);
    CHECK(sample_pixels(big, 300, 10) != a);
    TwoLevelMask none = big;
    std::fill(none.fine.begin(), none.fine.end(), 0);
    CHECK_THROWS_AS(sample_pixels(none, 10, 1), Error);
}
