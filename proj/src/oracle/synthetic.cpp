#include "cgseg/oracle/synthetic.hpp"

#include "cgseg/error.hpp"
#include "cgseg/io/binary.hpp"
#include "cgseg/io/cameras.hpp"
#include "cgseg/io/ply.hpp"
#include "cgseg/io/png.hpp"
#include "cgseg/oracle/brute_force.hpp"
#include "cgseg/random.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <map>
#include <numbers>
#include <numeric>

namespace cgseg::oracle {

namespace {

constexpr double kShC0 = 0.28209479177387814;

double truncated_normal(Rng& rng, double sigma) {
    double x;
    do {
        x = standard_normal(rng);
    } while (std::abs(x) > 2.0);
    return x * sigma;
}

/// Base colors; the first two objects are deliberately close in hue.
Eigen::Vector3d object_color(int k) {
    static const Eigen::Vector3d palette[] = {{0.80, 0.32, 0.28}, {0.76, 0.36, 0.30}, {0.25, 0.45, 0.80},
                                              {0.30, 0.70, 0.35}, {0.80, 0.70, 0.25}, {0.60, 0.35, 0.70}};
    return palette[k % 6];
}

std::vector<Eigen::Vector2d> object_centers(const SyntheticSpec& spec, Rng& rng) {
    std::vector<Eigen::Vector2d> centers;
    if (spec.layout == ObjectLayout::Ring) {
        for (int k = 0; k < spec.objects; ++k) {
            const double a = 2.0 * std::numbers::pi * k / spec.objects + 0.5 * std::numbers::pi;
            centers.emplace_back(spec.layout_radius * std::cos(a), spec.layout_radius * std::sin(a));
        }
        return centers;
    }
    const double min_gap = 4.0 * spec.part_sigma_xy + 6.0 * spec.gaussian_scale;
    for (int k = 0; k < spec.objects; ++k) {
        for (int attempt = 0;; ++attempt) {
            if (attempt > 10000) fail(ErrorCode::Precondition, "cannot place objects without overlap; enlarge layout_radius");
            const Eigen::Vector2d c((2.0 * uniform01(rng) - 1.0) * spec.layout_radius,
                                    (2.0 * uniform01(rng) - 1.0) * spec.layout_radius);
            bool ok = true;
            for (const auto& o : centers) ok = ok && (o - c).norm() >= min_gap;
            if (ok) {
                centers.push_back(c);
                break;
            }
        }
    }
    return centers;
}

std::vector<std::uint8_t> disk_morph(const std::vector<std::uint8_t>& mask, int width, int height, int radius, bool dilate) {
    if (radius <= 0) return mask;
    std::vector<std::uint8_t> out(mask.size(), 0);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            bool hit = !dilate;
            for (int dy = -radius; dy <= radius && hit != dilate; ++dy) {
                for (int dx = -radius; dx <= radius; ++dx) {
                    if (dx * dx + dy * dy > radius * radius) continue;
                    const int xx = x + dx, yy = y + dy;
                    const bool inside = xx >= 0 && yy >= 0 && xx < width && yy < height &&
                                        mask[static_cast<std::size_t>(yy) * static_cast<std::size_t>(width) + static_cast<std::size_t>(xx)];
                    if (dilate && inside) {
                        hit = true;
                        break;
                    }
                    if (!dilate && !inside) {
                        hit = false;
                        break;
                    }
                }
            }
            out[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)] = hit ? 1 : 0;
        }
    }
    return out;
}

} // namespace

nlohmann::json to_json(const SyntheticSpec& s) {
    return {{"objects", s.objects},
            {"parts_per_object", s.parts_per_object},
            {"gaussians_per_part", s.gaussians_per_part},
            {"layout", s.layout == ObjectLayout::Ring ? "ring" : "random"},
            {"layout_radius", s.layout_radius},
            {"part_spacing", s.part_spacing},
            {"part_sigma_xy", s.part_sigma_xy},
            {"part_sigma_z", s.part_sigma_z},
            {"gaussian_scale", s.gaussian_scale},
            {"opacity", s.opacity},
            {"train_views", s.train_views},
            {"heldout_views", s.heldout_views},
            {"camera_radius", s.camera_radius},
            {"elevation_deg", s.elevation_deg},
            {"width", s.width},
            {"height", s.height},
            {"fov_deg", s.fov_deg},
            {"noise",
             {{"id_permutation", s.noise.id_permutation},
              {"split_prob", s.noise.split_prob},
              {"merge_prob", s.noise.merge_prob},
              {"boundary_jitter", s.noise.boundary_jitter}}},
            {"seed", s.seed},
            {"label_maps", s.label_maps}};
}

SyntheticSpec spec_from_json(const nlohmann::json& j) {
    SyntheticSpec s;
    try {
        auto get = [&](const char* key, auto& value) {
            if (j.contains(key)) value = j.at(key).get<std::decay_t<decltype(value)>>();
        };
        get("objects", s.objects);
        get("parts_per_object", s.parts_per_object);
        get("gaussians_per_part", s.gaussians_per_part);
        if (j.contains("layout")) {
            const auto v = j.at("layout").get<std::string>();
            if (v != "ring" && v != "random") fail(ErrorCode::Format, "spec: layout must be 'ring' or 'random'");
            s.layout = v == "ring" ? ObjectLayout::Ring : ObjectLayout::Random;
        }
        get("layout_radius", s.layout_radius);
        get("part_spacing", s.part_spacing);
        get("part_sigma_xy", s.part_sigma_xy);
        get("part_sigma_z", s.part_sigma_z);
        get("gaussian_scale", s.gaussian_scale);
        get("opacity", s.opacity);
        get("train_views", s.train_views);
        get("heldout_views", s.heldout_views);
        get("camera_radius", s.camera_radius);
        get("elevation_deg", s.elevation_deg);
        get("width", s.width);
        get("height", s.height);
        get("fov_deg", s.fov_deg);
        get("seed", s.seed);
        get("label_maps", s.label_maps);
        if (j.contains("noise")) {
            const auto& n = j.at("noise");
            if (n.contains("id_permutation")) s.noise.id_permutation = n.at("id_permutation").get<bool>();
            if (n.contains("split_prob")) s.noise.split_prob = n.at("split_prob").get<double>();
            if (n.contains("merge_prob")) s.noise.merge_prob = n.at("merge_prob").get<double>();
            if (n.contains("boundary_jitter")) s.noise.boundary_jitter = n.at("boundary_jitter").get<int>();
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Format, std::string("spec: ") + e.what());
    }
    if (s.objects < 1 || s.parts_per_object < 1 || s.gaussians_per_part < 1 || s.train_views < 0 ||
        s.heldout_views < 0 || s.width < 1 || s.height < 1) {
        fail(ErrorCode::Format, "spec: counts and sizes must be positive");
    }
    return s;
}

RawSegments make_view_segments(const SyntheticSpec& spec, std::uint32_t view_id, int width, int height,
                               const std::vector<std::uint32_t>& object_map, const std::vector<std::uint32_t>& part_map,
                               std::uint64_t seed, std::vector<std::uint8_t>* split_events) {
    Rng rng(seed);
    const std::size_t P = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    const int parts = spec.parts_per_object;
    const std::size_t part_total = static_cast<std::size_t>(spec.objects) * static_cast<std::size_t>(parts);

    std::vector<std::size_t> object_area(static_cast<std::size_t>(spec.objects) + 1, 0), part_area(part_total + 1, 0);
    for (std::size_t p = 0; p < P; ++p) {
        ++object_area[object_map[p]];
        ++part_area[part_map[p]];
    }

    std::vector<std::vector<std::uint8_t>> pieces; // coarse segments first, then fine
    auto mask_of = [&](auto&& pred) {
        std::vector<std::uint8_t> m(P, 0);
        for (std::size_t p = 0; p < P; ++p) m[p] = pred(p) ? 1 : 0;
        return m;
    };
    for (int k = 1; k <= spec.objects; ++k) {
        if (object_area[static_cast<std::size_t>(k)] > 0) {
            pieces.push_back(mask_of([&](std::size_t p) { return object_map[p] == static_cast<std::uint32_t>(k); }));
        }
    }

    // Split decisions first, then merges of untouched neighbours.
    std::vector<std::uint8_t> split(part_total + 1, 0), merged(part_total + 1, 0);
    if (split_events) split_events->assign(part_total, 0);
    for (std::size_t g = 1; g <= part_total; ++g) {
        const double u = uniform01(rng);
        const double angle = uniform01(rng) * std::numbers::pi;
        if (part_area[g] == 0 || !(u < spec.noise.split_prob)) continue;
        double cx = 0.0, cy = 0.0;
        for (std::size_t p = 0; p < P; ++p) {
            if (part_map[p] != g) continue;
            cx += static_cast<double>(p % static_cast<std::size_t>(width));
            cy += static_cast<double>(p / static_cast<std::size_t>(width));
        }
        cx /= static_cast<double>(part_area[g]);
        cy /= static_cast<double>(part_area[g]);
        auto side = [&](std::size_t p) {
            const double x = static_cast<double>(p % static_cast<std::size_t>(width)) - cx;
            const double y = static_cast<double>(p / static_cast<std::size_t>(width)) - cy;
            return x * std::cos(angle) + y * std::sin(angle) >= 0.0;
        };
        auto a = mask_of([&](std::size_t p) { return part_map[p] == g && side(p); });
        auto b = mask_of([&](std::size_t p) { return part_map[p] == g && !side(p); });
        if (std::count(a.begin(), a.end(), 1) == 0 || std::count(b.begin(), b.end(), 1) == 0) continue;
        split[g] = 1;
        if (split_events) (*split_events)[g - 1] = 1;
        pieces.push_back(std::move(a));
        pieces.push_back(std::move(b));
    }
    for (int k = 0; k < spec.objects; ++k) {
        for (int j = 0; j + 1 < parts; ++j) {
            const double u = uniform01(rng);
            const std::size_t g0 = static_cast<std::size_t>(k * parts + j) + 1, g1 = g0 + 1;
            if (!(u < spec.noise.merge_prob) || part_area[g0] == 0 || part_area[g1] == 0 || split[g0] || split[g1] ||
                merged[g0] || merged[g1]) {
                continue;
            }
            merged[g0] = merged[g1] = 1;
            pieces.push_back(mask_of([&](std::size_t p) { return part_map[p] == g0 || part_map[p] == g1; }));
        }
    }
    for (std::size_t g = 1; g <= part_total; ++g) {
        if (part_area[g] == 0 || split[g] || merged[g]) continue;
        pieces.push_back(mask_of([&](std::size_t p) { return part_map[p] == g; }));
    }

    // Boundary jitter: each piece dilated or eroded by up to `boundary_jitter` px.
    if (spec.noise.boundary_jitter > 0) {
        for (auto& piece : pieces) {
            const int radius = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(spec.noise.boundary_jitter) + 1));
            const bool dilate = uniform01(rng) < 0.5;
            piece = disk_morph(piece, width, height, radius, dilate);
        }
    }

    std::vector<std::int32_t> local(pieces.size());
    std::iota(local.begin(), local.end(), 1);
    if (spec.noise.id_permutation) {
        for (std::size_t k = local.size(); k > 1; --k) std::swap(local[k - 1], local[uniform_below(rng, k)]);
    }
    RawSegments raw;
    raw.view_id = view_id;
    raw.width = width;
    raw.height = height;
    for (std::size_t k = 0; k < pieces.size(); ++k) {
        RawSegment s = make_segment(global_segment_id(view_id, local[k]), width, height, pieces[k]);
        if (s.area > 0) raw.segments.push_back(std::move(s));
    }
    std::sort(raw.segments.begin(), raw.segments.end(), [](const RawSegment& a, const RawSegment& b) { return a.id < b.id; });
    return raw;
}

SyntheticScene generate(const SyntheticSpec& spec) {
    SyntheticScene out;
    out.spec = spec;
    Rng rng(spec.seed);

    const auto centers = object_centers(spec, rng);
    out.scene.sh_degree = 0;
    for (int k = 0; k < spec.objects; ++k) {
        for (int j = 0; j < spec.parts_per_object; ++j) {
            const Eigen::Vector3d part_center(centers[static_cast<std::size_t>(k)].x(), centers[static_cast<std::size_t>(k)].y(),
                                              spec.part_spacing * j);
            const Eigen::Vector3d color = (object_color(k) * (0.85 + 0.15 * j)).cwiseMin(1.0);
            for (int n = 0; n < spec.gaussians_per_part; ++n) {
                Gaussian g;
                g.position = (part_center + Eigen::Vector3d(truncated_normal(rng, spec.part_sigma_xy),
                                                            truncated_normal(rng, spec.part_sigma_xy),
                                                            truncated_normal(rng, spec.part_sigma_z)))
                                 .cast<float>();
                for (int a = 0; a < 3; ++a) g.scale[a] = static_cast<float>(spec.gaussian_scale * (0.8 + 0.4 * uniform01(rng)));
                Eigen::Vector4d q(standard_normal(rng), standard_normal(rng), standard_normal(rng), standard_normal(rng));
                g.rotation = (q / q.norm()).cast<float>();
                g.opacity = spec.opacity;
                g.sh = {static_cast<float>((color[0] - 0.5) / kShC0), static_cast<float>((color[1] - 0.5) / kShC0),
                        static_cast<float>((color[2] - 0.5) / kShC0)};
                out.scene.push_back(g);
                out.object_of.push_back(static_cast<std::uint32_t>(k));
                out.part_of.push_back(static_cast<std::uint32_t>(k * spec.parts_per_object + j));
            }
        }
    }

    const Eigen::Vector3d target(0.0, 0.0, 0.5 * spec.part_spacing * (spec.parts_per_object - 1));
    const double fov = spec.fov_deg * std::numbers::pi / 180.0;
    auto ring_camera = [&](double azimuth, double elevation_deg) {
        const double el = elevation_deg * std::numbers::pi / 180.0;
        const Eigen::Vector3d eye = target + spec.camera_radius * Eigen::Vector3d(std::cos(el) * std::cos(azimuth),
                                                                                  std::cos(el) * std::sin(azimuth), std::sin(el));
        return look_at(eye, target, Eigen::Vector3d::UnitZ(), spec.width, spec.height, fov);
    };
    for (int v = 0; v < spec.train_views; ++v) {
        out.train_views.push_back(static_cast<std::uint32_t>(out.cameras.size()));
        out.cameras.push_back(ring_camera(2.0 * std::numbers::pi * v / std::max(1, spec.train_views), spec.elevation_deg));
    }
    for (int v = 0; v < spec.heldout_views; ++v) {
        out.heldout_views.push_back(static_cast<std::uint32_t>(out.cameras.size()));
        out.cameras.push_back(ring_camera(2.0 * std::numbers::pi * (v + 0.37) / std::max(1, spec.heldout_views),
                                          spec.elevation_deg + 5.0));
    }

    if (!spec.label_maps) return out;

    // Label = part with the largest summed blend weight where opacity reaches 0.5.
    const std::size_t part_total = out.part_count();
    RenderSettings settings;
    for (std::size_t c = 0; c < out.cameras.size(); ++c) {
        const Camera& cam = out.cameras[c];
        const std::size_t P = cam.pixel_count();
        std::vector<double> part_weight(P * part_total, 0.0), alpha(P, 0.0);
        brute_force_weights(out.scene, cam, settings, [&](std::size_t p, std::uint32_t i, double w) {
            part_weight[p * part_total + out.part_of[i]] += w;
            alpha[p] += w;
        });
        std::vector<std::uint32_t> objects(P, 0), partmap(P, 0);
        for (std::size_t p = 0; p < P; ++p) {
            if (alpha[p] < 0.5) continue;
            const auto begin = part_weight.begin() + static_cast<std::ptrdiff_t>(p * part_total);
            const auto best = static_cast<std::uint32_t>(std::max_element(begin, begin + static_cast<std::ptrdiff_t>(part_total)) - begin);
            partmap[p] = best + 1;
            objects[p] = best / static_cast<std::uint32_t>(spec.parts_per_object) + 1;
        }
        out.object_maps.push_back(std::move(objects));
        out.part_maps.push_back(std::move(partmap));
    }

    for (std::uint32_t v : out.train_views) {
        std::vector<std::uint8_t> events;
        out.segments.push_back(make_view_segments(spec, v, spec.width, spec.height, out.object_maps[v], out.part_maps[v],
                                                  mix_seed(spec.seed, 1000 + v), &events));
        out.split_events.push_back(std::move(events));
    }
    return out;
}

void write_synthetic(const SyntheticScene& s, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "masks");
    std::filesystem::create_directories(dir / "gt");
    io::save_scene(s.scene, dir / "scene.ply");
    io::save_cameras(s.cameras, dir / "cameras.json");
    for (const auto& raw : s.segments) {
        save_segments(raw, dir / "masks" / fmt::format("view_{:04}.cgsg", raw.view_id));
        save_two_level(assign_levels(raw), dir / "masks");
    }
    nlohmann::json labels = {{"object_of", s.object_of},
                             {"part_of", s.part_of},
                             {"train_views", s.train_views},
                             {"heldout_views", s.heldout_views},
                             {"objects", s.spec.objects},
                             {"parts_per_object", s.spec.parts_per_object}};
    const std::string text = labels.dump();
    io::write_file(dir / "gt" / "labels.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    for (std::size_t c = 0; c < s.object_maps.size(); ++c) {
        for (int which = 0; which < 2; ++which) {
            const auto& m = which == 0 ? s.object_maps[c] : s.part_maps[c];
            io::Image16 img{s.cameras[c].width, s.cameras[c].height, {}};
            for (std::uint32_t v : m) img.pixels.push_back(static_cast<std::uint16_t>(v));
            io::write_png(img, dir / "gt" / fmt::format("{}_{:04}.png", which == 0 ? "object" : "part", c));
        }
    }
    const std::string spec_text = to_json(s.spec).dump(2);
    io::write_file(dir / "spec.json", std::span(reinterpret_cast<const std::uint8_t*>(spec_text.data()), spec_text.size()));
}

} // namespace cgseg::oracle
