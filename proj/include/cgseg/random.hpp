#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace cgseg {

using Rng = std::mt19937_64;

/// Uniform in [0, 1) with 53 random bits; identical across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform integer in [0, n) by rejection; n > 0.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

/// Standard normal sample (Box–Muller on uniform01), portable across libraries.
double standard_normal(Rng& rng);

/// `count` distinct indices from [0, n) (all of them when count ≥ n), ascending.
std::vector<std::uint32_t> sample_indices(std::size_t n, std::size_t count, std::uint64_t seed);

/// Derives an independent stream seed (splitmix64 finalizer over both inputs).
constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

} // namespace cgseg
