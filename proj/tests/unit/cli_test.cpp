#include "cgseg/checkpoint.hpp"
#include "cgseg/features.hpp"
#include "cgseg/io/binary.hpp"
#include "cgseg/io/png.hpp"
#include "cgseg/masks.hpp"

#include "support/temp_dir.hpp"

#include <doctest.h>
#include <fmt/format.h>

#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>
#include <sys/wait.h>

using namespace cgseg;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

// Runs the CLI with `args`, capturing stdout and stderr.
Run run_cli(const std::string& args, const fs::path& scratch, const std::string& env = "") {
    const fs::path log = scratch / "cli.log";
    const std::string cmd = fmt::format("{} '{}' {} > '{}' 2>&1", env, CGSEG_CLI, args, log.string());
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    return r;
}

// A small clean synthetic scene shared by the cases below.
const fs::path& scene_dir() {
    static testing::TempDir dir;
    static const bool made = [] {
        std::ofstream(dir / "spec.json") << R"({"width": 96, "height": 96})";
        const Run r = run_cli(fmt::format("synth --spec '{}' --out '{}'", (dir / "spec.json").string(), (dir / "scene").string()),
                            dir.path());
        REQUIRE(r.code == 0);
        return true;
    }();
    (void)made;
    static const fs::path path = dir / "scene";
    return path;
}

std::string train_args(const fs::path& scene, const fs::path& out) {
    return fmt::format("train --scene '{}' --masks '{}' --cameras '{}' --out '{}'", (scene / "scene.ply").string(),
                       (scene / "masks").string(), (scene / "cameras.json").string(), out.string());
}

} // namespace

TEST_CASE("cli: usage errors exit with 2 and print usage") {
    testing::TempDir tmp;
    const Run unknown = run_cli("synth --out x --bogus", tmp.path());
    CHECK(unknown.code == 2);
    CHECK(unknown.out.find("Usage:") != std::string::npos);
    CHECK(run_cli("", tmp.path()).code == 2);
    CHECK(run_cli("train --scene a.ply", tmp.path()).code == 2);
    CHECK(run_cli(train_args(scene_dir(), tmp / "c.ckpt") + " --iterations many", tmp.path()).code == 2);
    CHECK(run_cli("synth --out x", tmp.path(), "CGSEG_THREADS=zero").code == 2);
    CHECK_FALSE(fs::exists(tmp / "x"));
    CHECK(run_cli("--help", tmp.path()).code == 0);
}

TEST_CASE("cli: bad inputs exit with 3 before writing anything") {
    testing::TempDir tmp;
    std::ofstream(tmp / "broken.json") << "{ not json";
    CHECK(run_cli(fmt::format("synth --spec '{}' --out '{}'", (tmp / "broken.json").string(), (tmp / "out").string()), tmp.path())
              .code == 3);
    CHECK_FALSE(fs::exists(tmp / "out"));

    const fs::path scene = scene_dir();
    std::ofstream(tmp / "cfg.json") << R"({"iterations": -4})";
    CHECK(run_cli(train_args(scene, tmp / "a.ckpt") + fmt::format(" --config '{}'", (tmp / "cfg.json").string()), tmp.path())
              .code == 3);
    CHECK(run_cli(train_args(scene, tmp / "a.ckpt") + " --layout sideways", tmp.path()).code == 3);
    CHECK(run_cli(train_args(scene, tmp / "missing" / "a.ckpt") + " --iterations 0", tmp.path()).code == 3);
    CHECK_FALSE(fs::exists(tmp / "a.ckpt"));

    std::ofstream(tmp / "junk.ckpt") << "junk";
    CHECK(run_cli(fmt::format("eval --scene '{}' --ckpt '{}' --gt '{}'", (scene / "scene.ply").string(),
                            (tmp / "junk.ckpt").string(), scene.string()),
                tmp.path())
              .code == 3);
    CHECK(run_cli(fmt::format("serve --scene '{}' --ckpt '{}' --bind nowhere", (scene / "scene.ply").string(),
                            (tmp / "junk.ckpt").string()),
                tmp.path())
              .code == 3);
}

TEST_CASE("cli: train with zero iterations writes the initial features") {
    testing::TempDir tmp;
    const Run r = run_cli(train_args(scene_dir(), tmp / "zero.ckpt") + " --iterations 0 --seed 5", tmp.path());
    REQUIRE(r.code == 0);
    const Checkpoint ck = load_checkpoint(tmp / "zero.ckpt");
    CHECK(ck.features == init_features(ck.features.size(), 5));
    CHECK(ck.features.size() == 900);
    CHECK(ck.iteration == 0);
}

TEST_CASE("cli: trained clean scene evaluates above 0.95 mean mIoU") {
    testing::TempDir tmp;
    const fs::path scene = scene_dir();
    const Run t = run_cli(train_args(scene, tmp / "t.ckpt") + " --iterations 1000 --gfl_start 600 --pixels_per_iter 1024 --seed 1"
                            + fmt::format(" --csv '{}'", (tmp / "loss.csv").string()),
                        tmp.path(), "CGSEG_THREADS=1");
    REQUIRE(t.code == 0);
    CHECK(fs::file_size(tmp / "loss.csv") > 0);

    const Run e = run_cli(fmt::format("eval --scene '{}' --ckpt '{}' --gt '{}' --csv '{}'", (scene / "scene.ply").string(),
                                    (tmp / "t.ckpt").string(), scene.string(), (tmp / "eval.csv").string()),
                        tmp.path());
    REQUIRE(e.code == 0);
    std::smatch m;
    REQUIRE(std::regex_search(e.out, m, std::regex("mean mIoU ([0-9.]+)")));
    CHECK(std::stod(m[1]) >= 0.95);
    std::ifstream csv(tmp / "eval.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "level,region,reference_view,iou");

    const Run b = run_cli(fmt::format("bench --scene '{}' --ckpt '{}' --clicks 20 --width 128 --height 128 --views 2",
                                    (scene / "scene.ply").string(), (tmp / "t.ckpt").string()),
                        tmp.path());
    CHECK(b.code == 0);
    CHECK(b.out.find("p95") != std::string::npos);
}

TEST_CASE("cli: masks convert from .cgsg files and SAM folders") {
    testing::TempDir tmp;
    const fs::path scene = scene_dir();
    REQUIRE(run_cli(fmt::format("masks convert --in '{}' --out '{}'", (scene / "masks").string(), (tmp / "m").string()),
                  tmp.path())
                .code == 0);
    CHECK(load_segments(tmp / "m") == load_segments(scene / "masks"));
    CHECK(load_two_level(tmp / "m", 3) == load_two_level(scene / "masks", 3));

    // Two SAM views: view_7 with masks 0 and 1, view_9 with mask 0.
    for (const auto& [name, count] : {std::pair{"view_7", 2}, std::pair{"view_9", 1}}) {
        const fs::path d = tmp / "sam" / name;
        fs::create_directories(d);
        std::ofstream(d / "metadata.csv") << "id,area\n";
        for (int k = 0; k < count; ++k) {
            io::Image8 img{8, 4, 1, std::vector<std::uint8_t>(32, 0)};
            for (int p = 0; p < 4 * (k + 1); ++p) img.pixels[static_cast<std::size_t>(p)] = 255;
            io::write_png(img, d / fmt::format("{}.png", k));
        }
    }
    REQUIRE(run_cli(fmt::format("masks convert --in '{}' --out '{}'", (tmp / "sam").string(), (tmp / "s").string()), tmp.path())
                .code == 0);
    const auto views = load_segments(tmp / "s");
    REQUIRE(views.size() == 2);
    CHECK(views[0].view_id == 7);
    CHECK(views[0].segments.size() == 2);
    CHECK(views[0].segments[1].id == global_segment_id(7, 2));
    CHECK(views[1].view_id == 9);
    const TwoLevelMask two = load_two_level(tmp / "s", 7);
    CHECK(two.coarse[0] == global_segment_id(7, 2));
    CHECK(two.fine[0] == global_segment_id(7, 1));

    fs::create_directories(tmp / "empty");
    CHECK(run_cli(fmt::format("masks convert --in '{}' --out '{}'", (tmp / "empty").string(), (tmp / "e").string()), tmp.path())
              .code == 3);
    CHECK_FALSE(fs::exists(tmp / "e"));
}
