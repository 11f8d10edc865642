#include "cgseg/bench.hpp"
#include "cgseg/checkpoint.hpp"
#include "cgseg/error.hpp"
#include "cgseg/io/binary.hpp"
#include "cgseg/io/cameras.hpp"
#include "cgseg/io/ply.hpp"
#include "cgseg/masks.hpp"
#include "cgseg/oracle/evaluation.hpp"
#include "cgseg/oracle/synthetic.hpp"
#include "cgseg/server/server.hpp"
#include "cgseg/training.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <tbb/global_control.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <optional>

namespace fs = std::filesystem;
using namespace cgseg;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_file(const fs::path& p, const char* what) {
    if (!fs::is_regular_file(p)) fail(ErrorCode::Io, fmt::format("{} '{}' does not exist", what, p.string()));
}

void require_dir(const fs::path& p, const char* what) {
    if (!fs::is_directory(p)) fail(ErrorCode::Io, fmt::format("{} '{}' is not a directory", what, p.string()));
}

// The directory an output file will be written to must already exist.
void require_parent(const fs::path& p) {
    const fs::path parent = p.has_parent_path() ? p.parent_path() : fs::path(".");
    if (!fs::is_directory(parent)) fail(ErrorCode::Io, fmt::format("output directory '{}' does not exist", parent.string()));
}

std::optional<std::uint32_t> trailing_number(const std::string& name) {
    std::size_t k = name.size();
    while (k > 0 && std::isdigit(static_cast<unsigned char>(name[k - 1]))) --k;
    if (k == name.size()) return std::nullopt;
    return static_cast<std::uint32_t>(std::stoul(name.substr(k)));
}

std::vector<TwoLevelMask> load_masks(const fs::path& dir, const std::vector<Camera>& cameras) {
    std::vector<TwoLevelMask> out;
    for (const auto& raw : load_segments(dir)) {
        if (raw.view_id >= cameras.size()) {
            fail(ErrorCode::Format, fmt::format("mask view {} has no camera ({} cameras)", raw.view_id, cameras.size()));
        }
        const Camera& c = cameras[raw.view_id];
        if (raw.width != c.width || raw.height != c.height) {
            fail(ErrorCode::Format, fmt::format("mask view {} is {}x{} but its camera is {}x{}", raw.view_id, raw.width,
                                                raw.height, c.width, c.height));
        }
        out.push_back(assign_levels(raw));
    }
    if (out.empty()) fail(ErrorCode::Format, fmt::format("no .cgsg mask files in '{}'", dir.string()));
    return out;
}

// ---------------------------------------------------------------------------

struct MasksArgs {
    fs::path in, out;
};

int run_masks_convert(const MasksArgs& a) {
    require_dir(a.in, "input");
    std::vector<RawSegments> views;
    std::vector<fs::path> sam_dirs;
    for (const auto& entry : fs::directory_iterator(a.in)) {
        if (entry.is_directory() && fs::exists(entry.path() / "metadata.csv")) sam_dirs.push_back(entry.path());
    }
    if (!sam_dirs.empty()) {
        std::sort(sam_dirs.begin(), sam_dirs.end());
        for (std::size_t k = 0; k < sam_dirs.size(); ++k) {
            const auto id = trailing_number(sam_dirs[k].filename().string());
            views.push_back(import_sam_folder(sam_dirs[k], id ? *id : static_cast<std::uint32_t>(k)));
        }
    } else {
        views = load_segments(a.in);
    }
    if (views.empty()) fail(ErrorCode::Format, fmt::format("'{}' holds neither SAM mask folders nor .cgsg files", a.in.string()));
    std::map<std::uint32_t, int> seen;
    for (const auto& v : views) {
        if (seen[v.view_id]++) fail(ErrorCode::Format, fmt::format("view id {} appears twice", v.view_id));
    }

    fs::create_directories(a.out);
    std::size_t segments = 0;
    for (const auto& v : views) {
        save_segments(v, a.out / fmt::format("view_{:04}.cgsg", v.view_id));
        save_two_level(assign_levels(v), a.out);
        segments += v.segments.size();
    }
    fmt::print("converted {} views ({} segments) into {}\n", views.size(), segments, a.out.string());
    return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    fs::path scene, masks, cameras, config, out, log, csv;
    std::map<std::string, std::string> overrides;
};

TrainConfig apply_overrides(TrainConfig cfg, const std::map<std::string, std::string>& overrides) {
    const nlohmann::json defaults = to_json(cfg);
    nlohmann::json patch = nlohmann::json::object();
    for (const auto& [key, text] : overrides) {
        if (defaults.at(key).is_string()) {
            patch[key] = text;
            continue;
        }
        nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
        if (value.is_discarded() || !value.is_number()) throw UsageError(fmt::format("--{} expects a number", key));
        if (defaults.at(key).is_number_integer() && !value.is_number_integer()) {
            throw UsageError(fmt::format("--{} expects an integer", key));
        }
        patch[key] = value;
    }
    return config_from_json(patch, cfg);
}

int run_train(const TrainArgs& a) {
    require_file(a.scene, "scene");
    require_file(a.cameras, "cameras");
    require_dir(a.masks, "masks");
    TrainConfig cfg;
    if (!a.config.empty()) {
        require_file(a.config, "config");
        cfg = load_config(a.config);
    }
    cfg = apply_overrides(cfg, a.overrides);
    cfg.validate();
    const GaussianScene scene = io::load_scene(a.scene);
    const std::vector<Camera> cameras = io::load_cameras(a.cameras);
    std::vector<TrainingView> views;
    for (auto& m : load_masks(a.masks, cameras)) views.push_back({cameras[m.view_id], std::move(m)});
    require_parent(a.out);
    if (!a.log.empty()) require_parent(a.log);
    if (!a.csv.empty()) require_parent(a.csv);

    spdlog::info("training {} Gaussians on {} views for {} iterations", scene.size(), views.size(), cfg.iterations);
    TrainOptions options;
    options.log_path = a.log;
    options.csv_path = a.csv;
    const TrainResult r = train(scene, views, cfg, options);
    save_checkpoint(r.checkpoint, a.out);
    fmt::print("wrote {} ({} coarse / {} fine clusters)\n", a.out.string(), r.checkpoint.clusters.coarse.size(),
               r.checkpoint.clusters.fine.size());
    return kOk;
}

// ---------------------------------------------------------------------------

struct LoadedModel {
    GaussianScene scene;
    Checkpoint checkpoint;
};

LoadedModel load_model(const fs::path& scene_path, const fs::path& ckpt_path) {
    require_file(scene_path, "scene");
    require_file(ckpt_path, "checkpoint");
    LoadedModel m{io::load_scene(scene_path), load_checkpoint(ckpt_path)};
    if (m.checkpoint.features.size() != m.scene.size()) {
        fail(ErrorCode::Format, fmt::format("checkpoint has {} feature rows but the scene has {} Gaussians",
                                            m.checkpoint.features.size(), m.scene.size()));
    }
    return m;
}

struct EvalArgs {
    fs::path scene, ckpt, gt, csv;
    int reference_view = -1;
};

int run_eval(const EvalArgs& a) {
    require_dir(a.gt, "ground-truth directory");
    const LoadedModel m = load_model(a.scene, a.ckpt);
    const oracle::SyntheticScene gt = oracle::load_synthetic(a.gt);
    if (gt.scene.size() != m.scene.size()) fail(ErrorCode::Format, "ground truth belongs to a different scene");
    if (gt.heldout_views.empty()) fail(ErrorCode::Format, "ground truth has no held-out views");
    if (a.reference_view >= static_cast<int>(gt.cameras.size())) throw UsageError("--reference-view is out of range");
    if (!a.csv.empty()) require_parent(a.csv);

    const SegmentationEngine engine(m.scene, m.checkpoint);
    std::string csv = "level,region,reference_view,iou\n";
    fmt::print("{:<7} {:>6} {:>9} {:>8}\n", "level", "region", "ref_view", "iou");
    double total = 0.0;
    std::size_t regions = 0;
    std::map<Level, double> level_mean;
    for (Level lv : kLevels) {
        const auto r = oracle::propagation_miou(engine, gt, lv, a.reference_view);
        for (std::size_t k = 0; k < r.miou.per_object.size(); ++k) {
            const double iou = r.miou.per_object[k];
            fmt::print("{:<7} {:>6} {:>9} {:>8.4f}\n", to_string(lv), k + 1, r.reference_views[k], iou);
            csv += fmt::format("{},{},{},{:.6f}\n", to_string(lv), k + 1, r.reference_views[k], iou);
            total += iou;
            ++regions;
        }
        level_mean[lv] = r.miou.mean;
    }
    const double mean = regions ? total / static_cast<double>(regions) : 0.0;
    for (Level lv : kLevels) {
        fmt::print("mean {:<7} {:.4f}\n", to_string(lv), level_mean[lv]);
        csv += fmt::format("{},mean,,{:.6f}\n", to_string(lv), level_mean[lv]);
    }
    fmt::print("mean mIoU {:.4f}\n", mean);
    csv += fmt::format("all,mean,,{:.6f}\n", mean);
    if (!a.csv.empty()) io::write_file(a.csv, std::span(reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()));
    return kOk;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
    fs::path spec, out;
};

int run_synth(const SynthArgs& a) {
    oracle::SyntheticSpec spec;
    if (!a.spec.empty()) {
        require_file(a.spec, "spec");
        const auto bytes = io::read_file(a.spec);
        const auto j = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
        if (j.is_discarded()) fail(ErrorCode::Format, a.spec.string() + ": not valid JSON");
        spec = oracle::spec_from_json(j);
    }
    const oracle::SyntheticScene s = oracle::generate(spec);
    fs::create_directories(a.out);
    oracle::write_synthetic(s, a.out);
    fmt::print("wrote {} Gaussians, {} cameras ({} train, {} held out) to {}\n", s.scene.size(), s.cameras.size(),
               s.train_views.size(), s.heldout_views.size(), a.out.string());
    return kOk;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
    fs::path scene, ckpt, cameras;
    std::size_t clicks = 100;
    int views = 8;
    int width = 800, height = 800;
    std::string level = "fine";
    std::uint64_t seed = 1;
};

int run_bench(const BenchArgs& a) {
    const auto level = parse_level(a.level);
    if (!level) throw UsageError("--level must be coarse or fine");
    const LoadedModel m = load_model(a.scene, a.ckpt);
    std::vector<Camera> cams;
    if (!a.cameras.empty()) {
        require_file(a.cameras, "cameras");
        cams = io::load_cameras(a.cameras);
    } else {
        cams = orbit_cameras(m.scene, a.views, a.width, a.height);
    }
    const SegmentationEngine engine(m.scene, m.checkpoint);
    const BenchReport r = bench(engine, cams, a.clicks, *level, a.seed);
    fmt::print("gaussians {}\n", m.scene.size());
    fmt::print("render ms/frame: p50 {:.2f} p95 {:.2f} mean {:.2f} ({} frames)\n", r.render.p50, r.render.p95, r.render.mean,
               r.render.samples_ms.size());
    fmt::print("click_select ms: p50 {:.2f} p95 {:.2f} mean {:.2f} ({} clicks, {} abstained)\n", r.click.p50, r.click.p95,
               r.click.mean, r.clicks, r.abstained);
    return kOk;
}

// ---------------------------------------------------------------------------

struct ServeArgs {
    fs::path scene, ckpt, cameras;
    std::string bind;
    int view = 0;
    int threads = 2;
};

int run_serve(const ServeArgs& a) {
    const server::Endpoint ep = server::parse_bind(a.bind);
    LoadedModel m = load_model(a.scene, a.ckpt);
    std::optional<Camera> camera;
    if (!a.cameras.empty()) {
        require_file(a.cameras, "cameras");
        const auto cams = io::load_cameras(a.cameras);
        if (a.view < 0 || a.view >= static_cast<int>(cams.size())) throw UsageError("--view is out of range");
        camera = cams[static_cast<std::size_t>(a.view)];
    }
    auto shared = server::make_shared_scene(std::move(m.scene), std::move(m.checkpoint), camera);
    server::Server srv(shared, ep, a.threads);
    srv.start(true);
    fmt::print("listening on {}:{}\n", ep.host, srv.port());
    std::fflush(stdout);
    srv.wait();
    srv.stop();
    return kOk;
}

int exit_code(const Error& e) { return e.code() == ErrorCode::Numeric ? kNumeric : kData; }

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-level Gaussian segmentation: mask conversion, training, evaluation, benchmarking and serving"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    MasksArgs masks;
    auto* masks_cmd = app.add_subcommand("masks", "Mask utilities");
    masks_cmd->require_subcommand(1);
    auto* convert = masks_cmd->add_subcommand("convert", "SAM mask folders or .cgsg files -> .cgsg + two-level ID maps");
    convert->add_option("--in", masks.in, "Input directory")->required();
    convert->add_option("--out", masks.out, "Output directory")->required();

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Train two-level features");
    train_cmd->add_option("--scene", tr.scene, "Pre-trained 3DGS .ply")->required();
    train_cmd->add_option("--masks", tr.masks, "Directory of .cgsg mask files")->required();
    train_cmd->add_option("--cameras", tr.cameras, "cameras.json")->required();
    train_cmd->add_option("--config", tr.config, "Training config JSON");
    train_cmd->add_option("--out", tr.out, "Checkpoint to write")->required();
    train_cmd->add_option("--log", tr.log, "Plain-text loss log");
    train_cmd->add_option("--csv", tr.csv, "CSV loss log");
    std::map<std::string, std::string> override_values;
    std::vector<std::pair<std::string, CLI::Option*>> override_opts;
    const nlohmann::json config_defaults = to_json(TrainConfig{});
    for (auto it = config_defaults.begin(); it != config_defaults.end(); ++it) {
        const std::string key = it.key();
        override_opts.emplace_back(key, train_cmd->add_option("--" + key, override_values[key],
                                                              fmt::format("Config override (default {})", it.value().dump())));
    }

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Label propagation mIoU against ground truth");
    eval_cmd->add_option("--scene", ev.scene, "Scene .ply")->required();
    eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
    eval_cmd->add_option("--gt", ev.gt, "Ground-truth directory (synth layout)")->required();
    eval_cmd->add_option("--reference-view", ev.reference_view, "Camera index used as the reference for every region");
    eval_cmd->add_option("--csv", ev.csv, "Also write the report as CSV");

    SynthArgs sy;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic scene with ground truth");
    synth_cmd->add_option("--spec", sy.spec, "Spec JSON (defaults when omitted)");
    synth_cmd->add_option("--out", sy.out, "Output directory")->required();

    BenchArgs be;
    auto* bench_cmd = app.add_subcommand("bench", "Render and click-select latency");
    bench_cmd->add_option("--scene", be.scene, "Scene .ply")->required();
    bench_cmd->add_option("--ckpt", be.ckpt, "Checkpoint")->required();
    bench_cmd->add_option("--clicks", be.clicks, "Number of clicks")->capture_default_str();
    bench_cmd->add_option("--cameras", be.cameras, "cameras.json (an orbit is used when omitted)");
    bench_cmd->add_option("--views", be.views, "Orbit camera count")->capture_default_str()->check(CLI::PositiveNumber);
    bench_cmd->add_option("--width", be.width, "Orbit image width")->capture_default_str()->check(CLI::PositiveNumber);
    bench_cmd->add_option("--height", be.height, "Orbit image height")->capture_default_str()->check(CLI::PositiveNumber);
    bench_cmd->add_option("--level", be.level, "coarse or fine")->capture_default_str();
    bench_cmd->add_option("--seed", be.seed, "Click sampling seed")->capture_default_str();

    ServeArgs sv;
    const char* bind_env = std::getenv("CGSEG_BIND");
    sv.bind = bind_env && *bind_env ? bind_env : "127.0.0.1:8765";
    auto* serve_cmd = app.add_subcommand("serve", "Interactive segmentation server");
    serve_cmd->add_option("--scene", sv.scene, "Scene .ply")->required();
    serve_cmd->add_option("--ckpt", sv.ckpt, "Checkpoint")->required();
    serve_cmd->add_option("--bind", sv.bind, "host:port (CGSEG_BIND)")->capture_default_str();
    serve_cmd->add_option("--cameras", sv.cameras, "cameras.json for the initial view");
    serve_cmd->add_option("--view", sv.view, "Initial camera index")->capture_default_str();
    serve_cmd->add_option("--threads", sv.threads, "Connection worker threads")->capture_default_str()->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

    std::unique_ptr<tbb::global_control> threads;
    if (const char* env = std::getenv("CGSEG_THREADS"); env && *env) {
        char* end = nullptr;
        const long n = std::strtol(env, &end, 10);
        if (*end != '\0' || n <= 0) {
            fmt::print(stderr, "error: CGSEG_THREADS must be a positive integer, got '{}'\n", env);
            return kUsage;
        }
        threads = std::make_unique<tbb::global_control>(tbb::global_control::max_allowed_parallelism, static_cast<std::size_t>(n));
    }

    try {
        if (convert->parsed()) return run_masks_convert(masks);
        if (train_cmd->parsed()) {
            for (const auto& [key, opt] : override_opts) {
                if (opt->count()) tr.overrides[key] = override_values[key];
            }
            return run_train(tr);
        }
        if (eval_cmd->parsed()) return run_eval(ev);
        if (synth_cmd->parsed()) return run_synth(sy);
        if (bench_cmd->parsed()) return run_bench(be);
        if (serve_cmd->parsed()) return run_serve(sv);
    } catch (const UsageError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kUsage;
    } catch (const Error& e) {
        fmt::print(stderr, "error ({}): {}\n", to_string(e.code()), e.what());
        return exit_code(e);
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kData;
    }
    return kUsage;
}
