#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string_view>

namespace cgseg {

/// Feature dimensions of the two-level field.
inline constexpr int kCoarseDim = 12;
inline constexpr int kFeatureDim = 24;
inline constexpr int kExtraDim = kFeatureDim - kCoarseDim;

enum class Level : std::uint8_t { Coarse = 0, Fine = 1 };

inline constexpr Level kLevels[] = {Level::Coarse, Level::Fine};

/// How the fine-level feature is assembled from a Gaussian's 24 stored scalars.
///
/// SharedPrior: fine = coarse ⊕ extra (24 dims). A coarse-level difference then
/// separates fine features as well.
/// Independent: fine = extra only (12 dims); both levels are learned separately.
enum class FeatureLayout : std::uint8_t { SharedPrior = 0, Independent = 1 };

constexpr int level_dim(Level level, FeatureLayout layout) {
    if (level == Level::Coarse) return kCoarseDim;
    return layout == FeatureLayout::SharedPrior ? kFeatureDim : kExtraDim;
}

/// Offset of the level's feature inside the 24-dim stored row.
constexpr int level_offset(Level level, FeatureLayout layout) {
    if (level == Level::Fine && layout == FeatureLayout::Independent) return kCoarseDim;
    return 0;
}

/// Norm a converged level feature sits at: 1 per 12-dim half, so √2 for the
/// concatenated fine feature.
inline double level_radius(Level level, FeatureLayout layout) {
    return level_dim(level, layout) == kFeatureDim ? std::sqrt(2.0) : 1.0;
}

constexpr std::string_view to_string(Level level) {
    return level == Level::Coarse ? "coarse" : "fine";
}

inline std::optional<Level> parse_level(std::string_view text) {
    if (text == "coarse") return Level::Coarse;
    if (text == "fine") return Level::Fine;
    return std::nullopt;
}

} // namespace cgseg
