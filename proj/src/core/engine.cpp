#include "cgseg/engine.hpp"

#include "cgseg/error.hpp"
#include "cgseg/io/binary.hpp"
#include "cgseg/io/png.hpp"

#include <json.hpp>

#include <algorithm>
#include <fmt/format.h>
#include <map>

namespace cgseg {

namespace {

Eigen::MatrixXf unit_rows(Eigen::MatrixXf m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const float n = m.row(r).norm();
        if (n > 0.0f) {
            m.row(r) /= n;
        } else {
            m.row(r).setZero();
        }
    }
    return m;
}

} // namespace

SegmentationEngine::SegmentationEngine(const GaussianScene& scene, const Checkpoint& checkpoint, EngineSettings settings)
    : scene_(&scene), checkpoint_(&checkpoint), settings_(settings) {
    if (checkpoint.features.size() != scene.size()) {
        fail(ErrorCode::Format, fmt::format("checkpoint has {} feature rows but the scene has {} Gaussians",
                                            checkpoint.features.size(), scene.size()));
    }
    for (Level level : kLevels) {
        const int dim = level_dim(level, layout()), off = level_offset(level, layout());
        const auto k = static_cast<std::size_t>(level);
        unit_features_[k] = unit_rows(checkpoint.features.matrix().middleCols(off, dim));
        const auto& list = checkpoint.clusters.at(level);
        reps_[k].resize(static_cast<Eigen::Index>(list.size()), dim);
        for (std::size_t c = 0; c < list.size(); ++c) {
            if (list[c].representative.size() != dim) {
                fail(ErrorCode::Format, fmt::format("{} cluster {} has the wrong dimension", to_string(level), list[c].id));
            }
            reps_[k].row(static_cast<Eigen::Index>(c)) = list[c].representative.transpose();
        }
        reps_[k] = unit_rows(reps_[k]);
    }
}

std::uint32_t SegmentationEngine::cluster_id(Level level, Eigen::Index row) const {
    return checkpoint_->clusters.at(level)[static_cast<std::size_t>(row)].id;
}

Eigen::VectorXf SegmentationEngine::similarities(Level level, const float* feature) const {
    const int dim = level_dim(level, layout());
    Eigen::Map<const Eigen::VectorXf> f(feature + level_offset(level, layout()), dim);
    const float n = f.norm();
    if (!(n > 0.0f)) return Eigen::VectorXf::Zero(reps(level).rows());
    return reps(level) * (f / n);
}

RenderBuffers SegmentationEngine::render_features(const Camera& camera, bool with_color) const {
    RenderSettings rs;
    rs.record_weights = false;
    rs.compute_color = with_color;
    return render(*scene_, checkpoint_->features, camera, rs);
}

std::vector<std::uint32_t> SegmentationEngine::gaussians_matching(Level level,
                                                                  const std::vector<std::uint32_t>& cluster_ids,
                                                                  double threshold) const {
    const auto& list = checkpoint_->clusters.at(level);
    std::vector<Eigen::Index> rows;
    for (std::uint32_t id : cluster_ids) {
        auto it = std::find_if(list.begin(), list.end(), [&](const GlobalCluster& c) { return c.id == id; });
        if (it == list.end()) fail(ErrorCode::Precondition, fmt::format("no {} cluster {}", to_string(level), id));
        rows.push_back(it - list.begin());
    }
    std::vector<std::uint32_t> out;
    if (rows.empty()) return out;
    const Eigen::MatrixXf& f = unit_features_[static_cast<std::size_t>(level)];
    Eigen::MatrixXf sel(static_cast<Eigen::Index>(rows.size()), f.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) sel.row(static_cast<Eigen::Index>(k)) = reps(level).row(rows[k]);
    const Eigen::MatrixXf sims = f * sel.transpose();
    const auto t = static_cast<float>(threshold);
    for (Eigen::Index i = 0; i < sims.rows(); ++i) {
        if ((sims.row(i).array() > t).any()) out.push_back(static_cast<std::uint32_t>(i));
    }
    return out;
}

Selection SegmentationEngine::click_select(const Camera& camera, int x, int y, Level level) const {
    if (reps(level).rows() == 0) fail(ErrorCode::Precondition, fmt::format("checkpoint has no {} clusters", to_string(level)));
    RenderSettings rs;
    rs.compute_color = false;
    const PixelSample sample = render_pixel(*scene_, checkpoint_->features, camera, x, y, rs);
    if (sample.alpha < settings_.opacity_gate) {
        fail(ErrorCode::BackgroundClick, fmt::format("pixel ({}, {}) has opacity {:.3f}", x, y, sample.alpha));
    }
    const Eigen::VectorXf sims = similarities(level, sample.feature.data());
    Eigen::Index best = 0;
    const float best_sim = sims.maxCoeff(&best);
    if (best_sim < settings_.similarity_gate) {
        fail(ErrorCode::NoConfidentMatch, fmt::format("best {} cluster similarity {:.3f}", to_string(level), best_sim));
    }
    Selection s;
    s.level = level;
    s.cluster_ids = {cluster_id(level, best)};
    s.gaussian_ids = gaussians_matching(level, s.cluster_ids, settings_.selection_threshold);
    s.click = Eigen::Vector2i(x, y);
    return s;
}

std::vector<std::uint32_t> SegmentationEngine::clusters_for_mask(const RenderBuffers& reference,
                                                                 const std::vector<std::uint8_t>& mask,
                                                                 Level level) const {
    if (mask.size() != reference.pixel_count()) fail(ErrorCode::Precondition, "reference mask size differs from the render");
    const auto C = reps(level).rows();
    std::vector<std::size_t> votes(static_cast<std::size_t>(C), 0);
    std::size_t total = 0;
    for (std::size_t p = 0; p < mask.size(); ++p) {
        if (!mask[p]) continue;
        ++total;
        const Eigen::VectorXf sims = similarities(level, reference.feature_fine.data() + p * kFeatureDim);
        for (Eigen::Index c = 0; c < C; ++c) {
            if (sims[c] > settings_.selection_threshold) ++votes[static_cast<std::size_t>(c)];
        }
    }
    if (total == 0) fail(ErrorCode::Precondition, "reference mask is empty");
    std::vector<std::uint32_t> out;
    for (Eigen::Index c = 0; c < C; ++c) {
        if (static_cast<double>(votes[static_cast<std::size_t>(c)]) >= settings_.vote_fraction * static_cast<double>(total)) {
            out.push_back(cluster_id(level, c));
        }
    }
    if (out.empty() && C > 0) {
        const auto best = std::max_element(votes.begin(), votes.end()) - votes.begin();
        if (votes[static_cast<std::size_t>(best)] > 0) out.push_back(cluster_id(level, best));
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::uint8_t> SegmentationEngine::selection_mask(const RenderBuffers& buffers, Level level,
                                                             const std::vector<std::uint32_t>& cluster_ids) const {
    const auto& list = checkpoint_->clusters.at(level);
    std::vector<Eigen::Index> rows;
    for (std::uint32_t id : cluster_ids) {
        for (std::size_t c = 0; c < list.size(); ++c) {
            if (list[c].id == id) rows.push_back(static_cast<Eigen::Index>(c));
        }
    }
    std::vector<std::uint8_t> out(buffers.pixel_count(), 0);
    if (rows.empty()) return out;
    for (std::size_t p = 0; p < out.size(); ++p) {
        if (buffers.alpha[p] < settings_.opacity_gate) continue;
        const Eigen::VectorXf sims = similarities(level, buffers.feature_fine.data() + p * kFeatureDim);
        for (Eigen::Index r : rows) {
            if (sims[r] > settings_.selection_threshold) {
                out[p] = 1;
                break;
            }
        }
    }
    return out;
}

std::vector<std::vector<std::uint8_t>> SegmentationEngine::propagate_labels(const Camera& reference_camera,
                                                                           const std::vector<std::uint8_t>& reference_mask,
                                                                           const std::vector<Camera>& targets,
                                                                           Level level) const {
    if (std::find(reference_mask.begin(), reference_mask.end(), std::uint8_t{1}) == reference_mask.end()) {
        fail(ErrorCode::Precondition, "reference mask has no assigned pixel");
    }
    const auto ids = clusters_for_mask(render_features(reference_camera), reference_mask, level);
    std::vector<std::vector<std::uint8_t>> out;
    out.reserve(targets.size());
    for (const Camera& cam : targets) out.push_back(selection_mask(render_features(cam), level, ids));
    return out;
}

std::vector<std::uint32_t> SegmentationEngine::segment_everything(const RenderBuffers& buffers, Level level) const {
    std::vector<std::uint32_t> out(buffers.pixel_count(), 0);
    if (reps(level).rows() == 0) return out;
    for (std::size_t p = 0; p < out.size(); ++p) {
        if (buffers.alpha[p] < settings_.opacity_gate) continue;
        const Eigen::VectorXf sims = similarities(level, buffers.feature_fine.data() + p * kFeatureDim);
        Eigen::Index best = 0;
        if (sims.maxCoeff(&best) >= settings_.similarity_gate) out[p] = cluster_id(level, best);
    }
    return out;
}

std::vector<std::uint32_t> SegmentationEngine::segment_everything(const Camera& camera, Level level) const {
    return segment_everything(render_features(camera), level);
}

EditedScene edit(const GaussianScene& scene, const FeatureStore& features, const std::vector<std::uint32_t>& gaussian_ids,
                 const EditOp& op) {
    if (features.size() != scene.size()) fail(ErrorCode::ContractViolation, "feature rows differ from the Gaussian count");
    for (std::uint32_t id : gaussian_ids) {
        if (id >= scene.size()) fail(ErrorCode::Precondition, fmt::format("Gaussian id {} out of range", id));
    }
    if (op.kind != EditKind::Remove && gaussian_ids.empty()) fail(ErrorCode::Precondition, "edit needs a nonempty selection");

    EditedScene out{scene, features};
    switch (op.kind) {
    case EditKind::Remove: {
        std::vector<std::uint8_t> keep(scene.size(), 1);
        for (std::uint32_t id : gaussian_ids) keep[id] = 0;
        GaussianScene kept;
        kept.sh_degree = scene.sh_degree;
        kept.reserve(scene.size());
        for (std::size_t i = 0; i < scene.size(); ++i) {
            if (keep[i]) kept.push_back(scene.at(i));
        }
        out.scene = std::move(kept);
        out.features = features.select_rows(keep);
        break;
    }
    case EditKind::Translate:
        for (std::uint32_t id : gaussian_ids) out.scene.positions[id] += op.vector;
        break;
    case EditKind::Rescale: {
        if (!(op.factor > 0.0f)) fail(ErrorCode::Precondition, "rescale factor must be positive");
        Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
        for (std::uint32_t id : gaussian_ids) centroid += scene.positions[id].cast<double>();
        centroid /= static_cast<double>(gaussian_ids.size());
        const double f = op.factor;
        for (std::uint32_t id : gaussian_ids) {
            out.scene.positions[id] = (centroid + f * (scene.positions[id].cast<double>() - centroid)).cast<float>();
            out.scene.scales[id] = scene.scales[id] * op.factor;
        }
        break;
    }
    case EditKind::Duplicate:
        for (std::uint32_t id : gaussian_ids) {
            Gaussian g = scene.at(id);
            g.position += op.vector;
            out.scene.push_back(g);
        }
        out.features.append_rows(gaussian_ids);
        break;
    }
    return out;
}

double mask_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
    if (a.size() != b.size()) fail(ErrorCode::Precondition, "masks differ in size");
    std::size_t inter = 0, uni = 0;
    for (std::size_t p = 0; p < a.size(); ++p) {
        const bool x = a[p] != 0, y = b[p] != 0;
        inter += x && y;
        uni += x || y;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

MiouReport evaluate_miou(const std::vector<std::vector<std::uint8_t>>& pred,
                         const std::vector<std::vector<std::uint8_t>>& gt) {
    if (pred.size() != gt.size()) fail(ErrorCode::Precondition, "prediction and ground-truth object counts differ");
    MiouReport report;
    for (std::size_t k = 0; k < pred.size(); ++k) report.per_object.push_back(mask_iou(pred[k], gt[k]));
    if (!report.per_object.empty()) {
        double sum = 0.0;
        for (double v : report.per_object) sum += v;
        report.mean = sum / static_cast<double>(report.per_object.size());
    }
    return report;
}

void export_id_map(const std::vector<std::uint32_t>& ids, int width, int height, Level level,
                   const std::filesystem::path& png_path) {
    if (ids.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        fail(ErrorCode::ContractViolation, "id map size mismatch");
    }
    io::Image16 image{width, height, {}};
    image.pixels.reserve(ids.size());
    std::map<std::uint32_t, std::size_t> counts;
    for (std::uint32_t id : ids) {
        if (id > 0xffff) fail(ErrorCode::Capacity, "cluster id does not fit a 16-bit PNG");
        image.pixels.push_back(static_cast<std::uint16_t>(id));
        if (id != 0) ++counts[id];
    }
    io::write_png(image, png_path);
    std::string lines;
    for (const auto& [id, n] : counts) {
        lines += nlohmann::json{{"value", id}, {"cluster_id", id}, {"level", std::string(to_string(level))}, {"pixels", n}}
                     .dump() +
                 "\n";
    }
    auto sidecar = png_path;
    sidecar.replace_extension(".jsonl");
    io::write_file(sidecar, std::span(reinterpret_cast<const std::uint8_t*>(lines.data()), lines.size()));
}

} // namespace cgseg
