#include "cgseg/oracle/evaluation.hpp"

#include "cgseg/error.hpp"
#include "cgseg/io/binary.hpp"
#include "cgseg/io/cameras.hpp"
#include "cgseg/io/ply.hpp"
#include "cgseg/io/png.hpp"
#include "cgseg/oracle/metrics.hpp"
#include "cgseg/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <deque>
#include <fmt/format.h>
#include <limits>

namespace cgseg::oracle {

std::vector<TrainingView> training_views(const SyntheticScene& s) {
    std::vector<TrainingView> views;
    for (const auto& raw : s.segments) views.push_back({s.cameras.at(raw.view_id), assign_levels(raw)});
    return views;
}

SyntheticScene load_synthetic(const std::filesystem::path& dir) {
    SyntheticScene s;
    const auto spec_bytes = io::read_file(dir / "spec.json");
    const auto label_bytes = io::read_file(dir / "gt" / "labels.json");
    try {
        s.spec = spec_from_json(nlohmann::json::parse(spec_bytes.begin(), spec_bytes.end()));
        const auto labels = nlohmann::json::parse(label_bytes.begin(), label_bytes.end());
        s.object_of = labels.at("object_of").get<std::vector<std::uint32_t>>();
        s.part_of = labels.at("part_of").get<std::vector<std::uint32_t>>();
        s.train_views = labels.at("train_views").get<std::vector<std::uint32_t>>();
        s.heldout_views = labels.at("heldout_views").get<std::vector<std::uint32_t>>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Format, fmt::format("{}: {}", dir.string(), e.what()));
    }
    s.scene = io::load_scene(dir / "scene.ply");
    s.cameras = io::load_cameras(dir / "cameras.json");
    if (s.object_of.size() != s.scene.size() || s.part_of.size() != s.scene.size()) {
        fail(ErrorCode::Format, "ground-truth labels do not match the scene size");
    }
    for (std::size_t c = 0; c < s.cameras.size(); ++c) {
        for (int which = 0; which < 2; ++which) {
            const auto img = io::read_png16(dir / "gt" / fmt::format("{}_{:04}.png", which == 0 ? "object" : "part", c));
            if (img.width != s.cameras[c].width || img.height != s.cameras[c].height) {
                fail(ErrorCode::Format, fmt::format("ground-truth map {} has the wrong size", c));
            }
            (which == 0 ? s.object_maps : s.part_maps).emplace_back(img.pixels.begin(), img.pixels.end());
        }
    }
    if (std::filesystem::is_directory(dir / "masks")) s.segments = load_segments(dir / "masks");
    return s;
}

Checkpoint labelled_checkpoint(const SyntheticScene& s, double noise, std::uint64_t seed) {
    Rng rng(seed);
    auto unit = [&](int dim) {
        Eigen::VectorXd v(dim);
        for (int k = 0; k < dim; ++k) v[k] = standard_normal(rng);
        return Eigen::VectorXd(v.normalized());
    };
    std::vector<Eigen::VectorXd> coarse, extra;
    for (int k = 0; k < s.spec.objects; ++k) coarse.push_back(unit(kCoarseDim));
    for (std::size_t k = 0; k < s.part_count(); ++k) extra.push_back(unit(kExtraDim));

    Checkpoint ck;
    ck.layout = FeatureLayout::SharedPrior;
    ck.features = FeatureStore(s.scene.size());
    for (std::size_t i = 0; i < s.scene.size(); ++i) {
        Eigen::VectorXd c = coarse[s.object_of[i]], e = extra[s.part_of[i]];
        for (int k = 0; k < kCoarseDim; ++k) c[k] += noise * standard_normal(rng);
        for (int k = 0; k < kExtraDim; ++k) e[k] += noise * standard_normal(rng);
        ck.features.row(i).head<kCoarseDim>() = c.normalized().cast<float>().transpose();
        ck.features.row(i).tail<kExtraDim>() = e.normalized().cast<float>().transpose();
    }
    const auto members = static_cast<std::uint32_t>(s.train_views.size());
    for (int k = 0; k < s.spec.objects; ++k) {
        ck.clusters.coarse.push_back({static_cast<std::uint32_t>(k + 1), members, coarse[static_cast<std::size_t>(k)].cast<float>()});
    }
    for (std::size_t k = 0; k < s.part_count(); ++k) {
        Eigen::VectorXd f(kFeatureDim);
        f << coarse[k / static_cast<std::size_t>(s.spec.parts_per_object)], extra[k];
        ck.clusters.fine.push_back({static_cast<std::uint32_t>(k + 1), members, f.cast<float>()});
    }
    return ck;
}

std::vector<std::uint32_t> gaussian_truth(const SyntheticScene& s, Level level) {
    const auto& src = level == Level::Coarse ? s.object_of : s.part_of;
    std::vector<std::uint32_t> out(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) out[i] = src[i] + 1;
    return out;
}

const std::vector<std::uint32_t>& label_map(const SyntheticScene& s, std::size_t camera, Level level) {
    return level == Level::Coarse ? s.object_maps.at(camera) : s.part_maps.at(camera);
}

std::size_t region_count(const SyntheticScene& s, Level level) {
    return level == Level::Coarse ? static_cast<std::size_t>(s.spec.objects) : s.part_count();
}

std::vector<std::uint32_t> gaussian_cluster_labels(const Checkpoint& checkpoint, Level level, double gate) {
    const std::size_t n = checkpoint.features.size();
    std::vector<std::uint32_t> out(n, 0);
    const auto& list = checkpoint.clusters.at(level);
    if (list.empty()) return out;
    const int dim = level_dim(level, checkpoint.layout), off = level_offset(level, checkpoint.layout);
    Eigen::MatrixXf reps(static_cast<Eigen::Index>(list.size()), dim);
    for (std::size_t c = 0; c < list.size(); ++c) reps.row(static_cast<Eigen::Index>(c)) = list[c].representative.normalized().transpose();
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::VectorXf f = checkpoint.features.row(i).segment(off, dim).transpose();
        const float norm = f.norm();
        if (!(norm > 0.0f)) continue;
        const Eigen::VectorXf sims = reps * (f / norm);
        Eigen::Index best = 0;
        if (sims.maxCoeff(&best) >= gate) out[i] = static_cast<std::uint32_t>(best) + 1;
    }
    return out;
}

double gaussian_label_accuracy(const SyntheticScene& s, const Checkpoint& checkpoint, Level level) {
    return matched_accuracy(gaussian_cluster_labels(checkpoint, level), gaussian_truth(s, level));
}

double selection_label_accuracy(const SyntheticScene& s, const Checkpoint& checkpoint, Level level, double threshold) {
    const auto truth = gaussian_truth(s, level);
    const auto& list = checkpoint.clusters.at(level);
    if (list.empty() || truth.empty()) return 0.0;
    const auto argmax = gaussian_cluster_labels(checkpoint, level, -2.0);
    const std::size_t regions = region_count(s, level);
    std::vector<std::vector<std::size_t>> votes(list.size(), std::vector<std::size_t>(regions + 1, 0));
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (argmax[i] > 0) ++votes[argmax[i] - 1][truth[i]];
    }
    std::vector<std::uint32_t> owner(list.size(), 0);
    for (std::size_t c = 0; c < list.size(); ++c) {
        owner[c] = static_cast<std::uint32_t>(std::max_element(votes[c].begin(), votes[c].end()) - votes[c].begin());
    }

    const int dim = level_dim(level, checkpoint.layout), off = level_offset(level, checkpoint.layout);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const Eigen::VectorXf f = checkpoint.features.row(i).segment(off, dim).transpose();
        const float norm = f.norm();
        if (!(norm > 0.0f)) continue;
        bool any = false, pure = true;
        for (std::size_t c = 0; c < list.size(); ++c) {
            if (f.dot(list[c].representative.normalized()) / norm > threshold) {
                any = true;
                pure = pure && owner[c] == truth[i];
            }
        }
        if (any && pure) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(truth.size());
}

bool interior_pixel(const std::vector<std::uint32_t>& map, int width, int height, std::uint32_t region, int& x, int& y) {
    const std::size_t P = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    constexpr int kFar = std::numeric_limits<int>::max();
    std::vector<int> dist(P, kFar);
    std::deque<std::size_t> queue;
    bool any = false;
    for (std::size_t p = 0; p < P; ++p) {
        const int px = static_cast<int>(p % static_cast<std::size_t>(width)), py = static_cast<int>(p / static_cast<std::size_t>(width));
        if (map[p] != region) {
            dist[p] = 0;
            queue.push_back(p);
        } else {
            any = true;
            // The frame border counts as outside.
            if (px == 0 || py == 0 || px == width - 1 || py == height - 1) {
                dist[p] = 1;
                queue.push_back(p);
            }
        }
    }
    if (!any) return false;
    while (!queue.empty()) {
        const std::size_t p = queue.front();
        queue.pop_front();
        const int px = static_cast<int>(p % static_cast<std::size_t>(width)), py = static_cast<int>(p / static_cast<std::size_t>(width));
        const int nx[4] = {px - 1, px + 1, px, px}, ny[4] = {py, py, py - 1, py + 1};
        for (int k = 0; k < 4; ++k) {
            if (nx[k] < 0 || ny[k] < 0 || nx[k] >= width || ny[k] >= height) continue;
            const std::size_t q = static_cast<std::size_t>(ny[k]) * static_cast<std::size_t>(width) + static_cast<std::size_t>(nx[k]);
            if (dist[q] > dist[p] + 1) {
                dist[q] = dist[p] + 1;
                queue.push_back(q);
            }
        }
    }
    const auto best = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
    x = static_cast<int>(best % static_cast<std::size_t>(width));
    y = static_cast<int>(best / static_cast<std::size_t>(width));
    return true;
}

namespace {

std::size_t region_area(const std::vector<std::uint32_t>& map, std::uint32_t region) {
    return static_cast<std::size_t>(std::count(map.begin(), map.end(), region));
}

std::uint32_t largest_view(const SyntheticScene& s, Level level, std::uint32_t region) {
    std::uint32_t best = s.train_views.front();
    std::size_t best_area = 0;
    for (std::uint32_t v : s.train_views) {
        const std::size_t a = region_area(label_map(s, v, level), region);
        if (a > best_area) {
            best_area = a;
            best = v;
        }
    }
    return best;
}

} // namespace

PropagationReport propagation_miou(const SegmentationEngine& engine, const SyntheticScene& s, Level level, int reference_view) {
    if (s.train_views.empty() || s.heldout_views.empty()) fail(ErrorCode::Precondition, "need training and held-out views");
    PropagationReport report;
    report.level = level;
    std::vector<Camera> targets;
    for (std::uint32_t v : s.heldout_views) targets.push_back(s.cameras[v]);

    std::vector<std::vector<std::uint8_t>> pred, gt;
    for (std::uint32_t region = 1; region <= region_count(s, level); ++region) {
        std::uint32_t ref = largest_view(s, level, region);
        if (reference_view >= 0 && static_cast<std::size_t>(reference_view) < s.cameras.size() &&
            region_area(label_map(s, static_cast<std::size_t>(reference_view), level), region) > 0) {
            ref = static_cast<std::uint32_t>(reference_view);
        }
        report.reference_views.push_back(ref);
        const auto& ref_map = label_map(s, ref, level);
        std::vector<std::uint8_t> ref_mask(ref_map.size());
        for (std::size_t p = 0; p < ref_map.size(); ++p) ref_mask[p] = ref_map[p] == region ? 1 : 0;

        std::vector<std::uint8_t> p_all, g_all;
        const auto masks = engine.propagate_labels(s.cameras[ref], ref_mask, targets, level);
        for (std::size_t t = 0; t < targets.size(); ++t) {
            const auto& truth = label_map(s, s.heldout_views[t], level);
            p_all.insert(p_all.end(), masks[t].begin(), masks[t].end());
            for (std::uint32_t v : truth) g_all.push_back(v == region ? 1 : 0);
        }
        pred.push_back(std::move(p_all));
        gt.push_back(std::move(g_all));
    }
    report.miou = evaluate_miou(pred, gt);
    return report;
}

ClickReport click_ious(const SegmentationEngine& engine, const SyntheticScene& s, Level level) {
    ClickReport report;
    report.level = level;
    const auto truth = gaussian_truth(s, level);
    for (std::uint32_t region = 1; region <= region_count(s, level); ++region) {
        const std::uint32_t view = largest_view(s, level, region);
        const Camera& cam = s.cameras[view];
        int x = 0, y = 0;
        std::vector<std::uint32_t> members;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            if (truth[i] == region) members.push_back(static_cast<std::uint32_t>(i));
        }
        report.camera.push_back(view);
        if (!interior_pixel(label_map(s, view, level), cam.width, cam.height, region, x, y)) {
            report.pixel.emplace_back(-1, -1);
            report.iou.push_back(0.0);
            continue;
        }
        report.pixel.emplace_back(x, y);
        try {
            report.iou.push_back(set_score(engine.click_select(cam, x, y, level).gaussian_ids, members).iou);
        } catch (const Error&) {
            report.iou.push_back(0.0);
        }
    }
    return report;
}

} // namespace cgseg::oracle
