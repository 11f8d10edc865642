#include "cgseg/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace cgseg {

double standard_normal(Rng& rng) {
    const double u1 = std::max(uniform01(rng), 1e-300), u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<std::uint32_t> sample_indices(std::size_t n, std::size_t count, std::uint64_t seed) {
    std::vector<std::uint32_t> all(n);
    std::iota(all.begin(), all.end(), 0u);
    if (count >= n) return all;
    Rng rng(seed);
    for (std::size_t k = 0; k < count; ++k) std::swap(all[k], all[k + uniform_below(rng, n - k)]);
    all.resize(count);
    std::sort(all.begin(), all.end());
    return all;
}

} // namespace cgseg
