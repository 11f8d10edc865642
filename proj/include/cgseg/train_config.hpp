#pragma once

#include "cgseg/types.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>

namespace cgseg {

struct TrainConfig {
    double lambda_neg_cont = 0.1;
    double lambda1 = 10.0; // GFL
    double lambda2 = 0.2;  // 3D norm
    double lambda3 = 0.2;  // 2D norm
    double lambda4 = 0.5;  // spatial
    double tau_f = 0.75;
    double tau_c = 0.5;
    double tau_g = 0.9;
    double learning_rate = 0.01;
    int pixels_per_iter = 10000;
    int iterations = 3000;
    int gfl_start = 2000;
    int gfl_update_every = 250;
    int n_spatial = 100000;
    int k_neighbors = 5;
    double hdbscan_eps_coarse = 1e-2;
    double hdbscan_eps_fine = 1e-3;
    std::uint64_t seed = 0;
    FeatureLayout layout = FeatureLayout::SharedPrior;
    int log_every = 50;

    double tau(Level level) const { return level == Level::Coarse ? tau_c : tau_f; }
    double hdbscan_eps(Level level) const { return level == Level::Coarse ? hdbscan_eps_coarse : hdbscan_eps_fine; }

    /// Throws Precondition on out-of-range values.
    void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
/// Keys must be TrainConfig field names; missing keys keep their defaults,
/// unknown keys are a Format error.
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path);

/// First 8 bytes (little-endian) of SHA-256 over the canonical JSON form.
std::uint64_t config_digest(const TrainConfig& cfg);

} // namespace cgseg
