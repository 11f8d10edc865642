#include "cgseg/training.hpp"

#include "cgseg/error.hpp"
#include "cgseg/kdtree.hpp"
#include "cgseg/random.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <numeric>
#include <unordered_map>

namespace cgseg {

std::vector<double> sampling_weights(const TwoLevelMask& mask) {
    const std::size_t P = mask.pixel_count();
    std::unordered_map<std::int32_t, std::uint32_t> area;
    for (std::size_t p = 0; p < P; ++p) {
        if (mask.fine[p] != 0 && mask.coarse[p] != 0) ++area[mask.fine[p]];
    }
    std::vector<double> w(P, 0.0);
    if (area.empty()) return w;
    std::uint32_t smallest = ~0u;
    for (const auto& [id, a] : area) smallest = std::min(smallest, a);
    for (std::size_t p = 0; p < P; ++p) {
        if (mask.fine[p] == 0 || mask.coarse[p] == 0) continue;
        w[p] = std::clamp(static_cast<double>(smallest) / static_cast<double>(area.at(mask.fine[p])), 1e-4, 1.0);
    }
    return w;
}

std::vector<std::uint32_t> sample_pixels(const TwoLevelMask& mask, std::size_t n, std::uint64_t seed) {
    const std::vector<double> w = sampling_weights(mask);
    // Weighted sampling without replacement: keep the n largest log(u)/w keys.
    std::vector<std::pair<double, std::uint32_t>> keys;
    Rng rng(seed);
    for (std::size_t p = 0; p < w.size(); ++p) {
        if (w[p] <= 0.0) continue;
        const double u = uniform01(rng);
        keys.push_back({std::log(std::max(u, 1e-300)) / w[p], static_cast<std::uint32_t>(p)});
    }
    if (keys.empty()) fail(ErrorCode::Precondition, fmt::format("view {} has no assigned pixels", mask.view_id));
    std::vector<std::uint32_t> out;
    if (keys.size() <= n) {
        for (const auto& k : keys) out.push_back(k.second);
        return out;
    }
    std::nth_element(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(n), keys.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
    for (std::size_t k = 0; k < n; ++k) out.push_back(keys[k].second);
    std::sort(out.begin(), out.end());
    return out;
}

PixelBatch make_batch(const TwoLevelMask& mask, const RenderBuffersD& buffers, std::vector<std::uint32_t> pixels) {
    if (buffers.width != mask.width || buffers.height != mask.height) {
        fail(ErrorCode::ContractViolation, "render and mask sizes differ");
    }
    PixelBatch batch;
    batch.view_id = mask.view_id;
    batch.features.resize(static_cast<Eigen::Index>(pixels.size()), kFeatureDim);
    for (std::size_t k = 0; k < pixels.size(); ++k) {
        const std::uint32_t p = pixels[k];
        batch.coarse_ids.push_back(mask.coarse[p]);
        batch.fine_ids.push_back(mask.fine[p]);
        batch.features.row(static_cast<Eigen::Index>(k)) = buffers.fine_at(p).transpose();
    }
    batch.pixels = std::move(pixels);
    return batch;
}

Adam::Adam(Eigen::Index rows, double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps), m_(RowMatrixD::Zero(rows, kFeatureDim)),
      v_(RowMatrixD::Zero(rows, kFeatureDim)) {}

void Adam::step(RowMatrixD& params, const RowMatrixD& grad) {
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

GlobalClusters refresh_clusters(const GaussianScene& scene, const FeatureStore& features,
                                const std::vector<TrainingView>& views, const TrainConfig& cfg) {
    RenderSettings settings;
    settings.record_weights = false;
    settings.compute_color = false;
    std::vector<RenderBuffers> renders;
    renders.reserve(views.size());
    for (const auto& v : views) renders.push_back(render(scene, features, v.camera, settings));
    std::vector<const RenderBuffers*> rp;
    std::vector<const TwoLevelMask*> mp;
    for (std::size_t k = 0; k < views.size(); ++k) {
        rp.push_back(&renders[k]);
        mp.push_back(&views[k].mask);
    }
    const auto pooled = pool_segment_features(rp, mp, cfg.layout);
    const int mcs = min_cluster_size_for_views(views.size());
    GlobalClusters out;
    for (Level level : kLevels) out.at(level) = cluster_level(pooled, level, cfg.layout, cfg.hdbscan_eps(level), mcs).clusters;
    return out;
}

namespace {

bool all_finite(const RowMatrixD& m) { return m.allFinite(); }

class TrainLogger {
public:
    explicit TrainLogger(const TrainOptions& options) : options_(options) {
        if (!options.log_path.empty()) open(text_, options.log_path);
        if (!options.csv_path.empty()) {
            open(csv_, options.csv_path);
            csv_ << "iteration,total,cont_pos,cont_neg,gfl_pos,gfl_neg,norm3d,norm2d,spatial,coarse_clusters,fine_clusters\n";
        }
    }

    void write(const TrainLogEntry& e) {
        const std::string line = fmt::format(
            "iter {:5d} total {:+.5f} cont_pos {:+.5f} cont_neg {:.5f} gfl_pos {:+.5f} gfl_neg {:.5f} "
            "norm3d {:.5f} norm2d {:.5f} spatial {:+.5f} clusters {}/{}",
            e.iteration, e.total, e.cont_pos, e.cont_neg, e.gfl_pos, e.gfl_neg, e.norm3d, e.norm2d, e.spatial,
            e.coarse_clusters, e.fine_clusters);
        spdlog::info("{}", line);
        if (text_.is_open()) text_ << line << '\n' << std::flush;
        if (csv_.is_open()) {
            csv_ << fmt::format("{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{},{}\n", e.iteration,
                                e.total, e.cont_pos, e.cont_neg, e.gfl_pos, e.gfl_neg, e.norm3d, e.norm2d, e.spatial,
                                e.coarse_clusters, e.fine_clusters)
                 << std::flush;
        }
        if (options_.on_log) options_.on_log(e);
    }

private:
    static void open(std::ofstream& f, const std::filesystem::path& path) {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        f.open(path);
        if (!f) fail(ErrorCode::Io, "cannot write " + path.string());
    }

    const TrainOptions& options_;
    std::ofstream text_, csv_;
};

} // namespace

TrainResult train(const GaussianScene& scene, const std::vector<TrainingView>& views, const TrainConfig& cfg,
                  const TrainOptions& options) {
    cfg.validate();
    if (scene.empty()) fail(ErrorCode::EmptyScene, "cannot train on an empty scene");
    if (views.size() < 2) fail(ErrorCode::Precondition, "training needs at least two views with masks");
    for (const auto& v : views) {
        v.camera.validate();
        if (v.camera.width != v.mask.width || v.camera.height != v.mask.height) {
            fail(ErrorCode::Precondition, fmt::format("view {}: camera and mask sizes differ", v.mask.view_id));
        }
    }

    const auto N = static_cast<Eigen::Index>(scene.size());
    TrainResult result;
    Checkpoint& ck = result.checkpoint;
    ck.layout = cfg.layout;
    ck.config_digest = config_digest(cfg);
    const FeatureStore initial = init_features(scene.size(), cfg.seed);
    if (cfg.iterations == 0) {
        ck.features = initial;
        return result;
    }

    FeatureStoreD master = initial.cast<double>();
    Adam adam(N, cfg.learning_rate);

    std::vector<std::uint32_t> neighbors;
    if (cfg.lambda4 > 0.0 && cfg.n_spatial > 0) {
        if (scene.size() < static_cast<std::size_t>(cfg.k_neighbors) + 1) {
            fail(ErrorCode::Precondition, "spatial regularizer needs more Gaussians than k_neighbors");
        }
        neighbors = KdTree(scene.positions).knn_all(cfg.k_neighbors);
    }

    RenderSettings settings;
    settings.compute_color = false;
    Rng view_rng(mix_seed(cfg.seed, 0x5649455753ull));
    TrainLogger logger(options);
    GlobalClusters clusters;
    bool warn_empty = false;

    for (int it = 0; it < cfg.iterations; ++it) {
        const bool gfl_on = it >= cfg.gfl_start;
        if (gfl_on && (it - cfg.gfl_start) % cfg.gfl_update_every == 0 && (cfg.lambda1 > 0.0 || it == cfg.gfl_start)) {
            clusters = refresh_clusters(scene, master.cast<float>(), views, cfg);
            warn_empty = true;
        }

        const TrainingView& view = views[uniform_below(view_rng, views.size())];
        const RenderBuffersD rb = render(scene, master, view.camera, settings);
        auto pixels = sample_pixels(view.mask, static_cast<std::size_t>(cfg.pixels_per_iter),
                                    mix_seed(cfg.seed, 2 * static_cast<std::uint64_t>(it) + 1));
        const PixelBatch batch = make_batch(view.mask, rb, std::move(pixels));
        const ContrastiveResult cont = contrastive_loss(batch, cfg);

        PixelLossResult norm2d = rendered_norm_loss(rb, cfg.layout);
        std::vector<double>& grad_pixels = norm2d.grad_pixels;
        for (double& g : grad_pixels) g *= cfg.lambda3;
        for (std::size_t k = 0; k < batch.size(); ++k) {
            double* g = grad_pixels.data() + static_cast<std::size_t>(batch.pixels[k]) * kFeatureDim;
            for (int d = 0; d < kFeatureDim; ++d) g[d] += cont.grad(static_cast<Eigen::Index>(k), d);
        }
        RowMatrixD grad = backward_features<double>(rb, grad_pixels);

        const LossResult norm3d = hypersphere_loss(master.matrix());
        grad += cfg.lambda2 * norm3d.grad;

        LossResult spatial;
        if (!neighbors.empty()) {
            const auto samples = sample_indices(scene.size(), static_cast<std::size_t>(cfg.n_spatial),
                                                mix_seed(cfg.seed, 2 * static_cast<std::uint64_t>(it) + 2));
            spatial = spatial_loss(master.matrix(), samples, neighbors, cfg.k_neighbors);
            grad += cfg.lambda4 * spatial.grad;
        }

        LossResult gfl;
        if (gfl_on && cfg.lambda1 > 0.0) {
            gfl = gfl_loss(master.matrix(), clusters, cfg, nullptr, warn_empty);
            warn_empty = false;
            grad += cfg.lambda1 * gfl.grad;
        }

        TrainLogEntry entry{it,
                            cont.total + cfg.lambda1 * gfl.value + cfg.lambda2 * norm3d.value +
                                cfg.lambda3 * norm2d.value + cfg.lambda4 * spatial.value,
                            cont.pos,
                            cont.neg,
                            gfl.pos,
                            gfl.neg,
                            norm3d.value,
                            norm2d.value,
                            spatial.value,
                            clusters.coarse.size(),
                            clusters.fine.size()};
        if (!std::isfinite(entry.total) || !all_finite(grad)) {
            fail(ErrorCode::Numeric,
                 fmt::format("non-finite loss at iteration {}: cont {} gfl {} norm3d {} norm2d {} spatial {}", it,
                             cont.total, gfl.value, norm3d.value, norm2d.value, spatial.value));
        }
        adam.step(master.matrix(), grad);
        if (it % cfg.log_every == 0 || it + 1 == cfg.iterations) {
            logger.write(entry);
            result.log.push_back(entry);
        }
    }

    ck.features = master.cast<float>();
    ck.clusters = refresh_clusters(scene, ck.features, views, cfg);
    ck.iteration = static_cast<std::uint64_t>(cfg.iterations);
    return result;
}

} // namespace cgseg
