#include "cgseg/train_config.hpp"

#include "cgseg/error.hpp"
#include "cgseg/io/binary.hpp"

#include <openssl/sha.h>

#include <fmt/format.h>

namespace cgseg {

namespace {

template <typename Fn>
void for_each_field(TrainConfig& c, Fn&& fn) {
    fn("lambda_neg_cont", c.lambda_neg_cont);
    fn("lambda1", c.lambda1);
    fn("lambda2", c.lambda2);
    fn("lambda3", c.lambda3);
    fn("lambda4", c.lambda4);
    fn("tau_f", c.tau_f);
    fn("tau_c", c.tau_c);
    fn("tau_g", c.tau_g);
    fn("learning_rate", c.learning_rate);
    fn("pixels_per_iter", c.pixels_per_iter);
    fn("iterations", c.iterations);
    fn("gfl_start", c.gfl_start);
    fn("gfl_update_every", c.gfl_update_every);
    fn("n_spatial", c.n_spatial);
    fn("k_neighbors", c.k_neighbors);
    fn("hdbscan_eps_coarse", c.hdbscan_eps_coarse);
    fn("hdbscan_eps_fine", c.hdbscan_eps_fine);
    fn("seed", c.seed);
    fn("log_every", c.log_every);
}

} // namespace

void TrainConfig::validate() const {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) fail(ErrorCode::Precondition, "config: " + what);
    };
    require(tau_c > 0.0 && tau_c <= tau_f && tau_f < tau_g && tau_g <= 1.0, "need 0 < tau_c <= tau_f < tau_g <= 1");
    require(iterations >= 0, "iterations must be non-negative");
    require(iterations == 0 || gfl_start < iterations, "gfl_start must be below iterations");
    require(gfl_start >= 0, "gfl_start must be non-negative");
    require(gfl_update_every > 0, "gfl_update_every must be positive");
    require(pixels_per_iter > 0, "pixels_per_iter must be positive");
    require(n_spatial >= 0 && k_neighbors >= 1, "n_spatial >= 0 and k_neighbors >= 1");
    require(learning_rate > 0.0, "learning_rate must be positive");
    require(lambda_neg_cont >= 0.0 && lambda1 >= 0.0 && lambda2 >= 0.0 && lambda3 >= 0.0 && lambda4 >= 0.0,
            "loss weights must be non-negative");
    require(hdbscan_eps_coarse >= 0.0 && hdbscan_eps_fine >= 0.0, "epsilons must be non-negative");
    require(log_every > 0, "log_every must be positive");
}

nlohmann::json to_json(const TrainConfig& cfg) {
    nlohmann::json j = nlohmann::json::object();
    TrainConfig copy = cfg;
    for_each_field(copy, [&](const char* name, auto& value) { j[name] = value; });
    j["layout"] = cfg.layout == FeatureLayout::SharedPrior ? "shared_prior" : "independent";
    return j;
}

TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base) {
    if (!j.is_object()) fail(ErrorCode::Format, "config: expected a JSON object");
    std::size_t known = 0;
    try {
        for_each_field(base, [&](const char* name, auto& value) {
            auto it = j.find(name);
            if (it == j.end()) return;
            ++known;
            using T = std::decay_t<decltype(value)>;
            if constexpr (std::is_integral_v<T>) {
                if (!it->is_number_integer()) fail(ErrorCode::Format, fmt::format("config: '{}' must be an integer", name));
            } else if (!it->is_number()) {
                fail(ErrorCode::Format, fmt::format("config: '{}' must be a number", name));
            }
            value = it->template get<T>();
        });
        if (auto it = j.find("layout"); it != j.end()) {
            ++known;
            const auto s = it->get<std::string>();
            if (s == "shared_prior") {
                base.layout = FeatureLayout::SharedPrior;
            } else if (s == "independent") {
                base.layout = FeatureLayout::Independent;
            } else {
                fail(ErrorCode::Format, "config: layout must be 'shared_prior' or 'independent'");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Format, std::string("config: ") + e.what());
    }
    if (known != j.size()) {
        const nlohmann::json reference = to_json(TrainConfig{});
        for (const auto& [key, value] : j.items()) {
            if (!reference.contains(key)) fail(ErrorCode::Format, fmt::format("config: unknown key '{}'", key));
        }
    }
    return base;
}

TrainConfig load_config(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Format, fmt::format("{}: {}", path.string(), e.what()));
    }
    return config_from_json(j);
}

std::uint64_t config_digest(const TrainConfig& cfg) {
    const std::string text = to_json(cfg).dump();
    unsigned char hash[SHA256_DIGEST_LENGTH];
    SHA256(reinterpret_cast<const unsigned char*>(text.data()), text.size(), hash);
    std::uint64_t digest = 0;
    for (int k = 7; k >= 0; --k) digest = (digest << 8) | hash[k];
    return digest;
}

} // namespace cgseg
