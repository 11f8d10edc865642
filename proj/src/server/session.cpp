#include "cgseg/server/session.hpp"

#include "cgseg/bench.hpp"
#include "cgseg/error.hpp"
#include "cgseg/io/cameras.hpp"
#include "cgseg/io/png.hpp"

#include <fmt/format.h>
#include <openssl/evp.h>

#include <algorithm>
#include <cmath>

namespace cgseg::server {

namespace {

[[noreturn]] void bad_request(const std::string& message) { throw std::invalid_argument(message); }

template <typename T>
T field(const nlohmann::json& m, const char* key) {
    if (!m.contains(key)) bad_request(fmt::format("missing field '{}'", key));
    try {
        return m.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        bad_request(fmt::format("field '{}' has the wrong type", key));
    }
}

Level level_field(const nlohmann::json& m, Level fallback) {
    if (!m.contains("level")) return fallback;
    const auto level = parse_level(field<std::string>(m, "level"));
    if (!level) bad_request("level must be 'coarse' or 'fine'");
    return *level;
}

Eigen::Vector3f vector_field(const nlohmann::json& params) {
    const auto v = field<std::vector<float>>(params, "vector");
    if (v.size() != 3) bad_request("vector needs 3 components");
    return {v[0], v[1], v[2]};
}

Camera parse_camera(const nlohmann::json& m) {
    nlohmann::json j;
    if (m.contains("camera")) {
        j = m.at("camera");
    } else {
        const auto intr = field<nlohmann::json>(m, "intrinsics");
        if (!intr.is_object()) bad_request("intrinsics must be an object");
        j = intr;
        j["world_to_camera"] = field<nlohmann::json>(m, "pose");
    }
    Camera cam;
    try {
        cam = io::camera_from_json(j);
        cam.validate();
    } catch (const std::exception& e) {
        bad_request(fmt::format("invalid camera: {}", e.what()));
    }
    return cam;
}

void require_16bit(const std::vector<std::uint32_t>& ids) {
    for (auto v : ids) {
        if (v > 0xffff) fail(ErrorCode::Capacity, "overlay id does not fit 16 bits");
    }
}

nlohmann::json error_reply(const std::string& code, const std::string& message) {
    return {{"type", "error"}, {"code", code}, {"message", message}};
}

} // namespace

std::shared_ptr<const SharedScene> make_shared_scene(GaussianScene scene, Checkpoint checkpoint,
                                                     std::optional<Camera> camera, EngineSettings settings) {
    if (checkpoint.features.size() != scene.size()) {
        fail(ErrorCode::Precondition, fmt::format("checkpoint has {} feature rows but the scene has {} Gaussians",
                                                  checkpoint.features.size(), scene.size()));
    }
    auto shared = std::make_shared<SharedScene>();
    shared->default_camera = camera ? *camera : orbit_cameras(scene, 1, 640, 480).front();
    shared->scene = std::move(scene);
    shared->checkpoint = std::move(checkpoint);
    shared->settings = settings;
    return shared;
}

Session::Session(std::shared_ptr<const SharedScene> shared, std::string id)
    : shared_(std::move(shared)), id_(std::move(id)), camera_(shared_->default_camera) {
    replay();
}

void Session::replay() {
    GaussianScene scene = shared_->scene;
    FeatureStore features = shared_->checkpoint.features;
    for (const auto& e : history_) {
        EditedScene next = edit(scene, features, e.gaussian_ids, e.op);
        scene = std::move(next.scene);
        features = std::move(next.features);
    }
    engine_.reset();
    scene_ = std::move(scene);
    checkpoint_.layout = shared_->checkpoint.layout;
    checkpoint_.clusters = shared_->checkpoint.clusters;
    checkpoint_.iteration = shared_->checkpoint.iteration;
    checkpoint_.config_digest = shared_->checkpoint.config_digest;
    checkpoint_.features = std::move(features);
    engine_ = std::make_unique<SegmentationEngine>(scene_, checkpoint_, shared_->settings);
}

nlohmann::json Session::handle_text(std::string_view text) {
    nlohmann::json m = nlohmann::json::parse(text, nullptr, false);
    if (m.is_discarded()) return error_reply("bad_request", "message is not valid JSON");
    return handle(m);
}

nlohmann::json Session::handle(const nlohmann::json& message) {
    nlohmann::json reply;
    try {
        if (!message.is_object()) bad_request("message must be a JSON object");
        if (message.contains("version") && message.at("version") != kProtocolVersion) {
            bad_request(fmt::format("unsupported protocol version, server speaks {}", kProtocolVersion));
        }
        reply = dispatch(field<std::string>(message, "type"), message);
    } catch (const std::invalid_argument& e) {
        reply = error_reply("bad_request", e.what());
    } catch (const Error& e) {
        reply = error_reply(to_string(e.code()), e.what());
    } catch (const std::exception& e) {
        reply = error_reply("internal", e.what());
    }
    if (message.is_object() && message.contains("seq")) reply["seq"] = message.at("seq");
    return reply;
}

nlohmann::json Session::dispatch(const std::string& type, const nlohmann::json& m) {
    const nlohmann::json ack = {{"type", "ack"}};
    if (type == "hello") {
        return {{"type", "hello"},
                {"version", kProtocolVersion},
                {"session_id", id_},
                {"gaussians", scene_.size()},
                {"camera", io::camera_to_json(camera_)}};
    }
    if (type == "set_camera") {
        camera_ = parse_camera(m);
        return ack;
    }
    if (type == "click") {
        return on_click(m);
    }
    if (type == "clear_selection") {
        selection_.reset();
        return ack;
    }
    if (type == "edit") {
        return on_edit(m);
    }
    if (type == "undo") {
        if (history_.empty()) fail(ErrorCode::Precondition, "nothing to undo");
        history_.pop_back();
        selection_.reset();
        replay();
        nlohmann::json r = ack;
        r["gaussians"] = scene_.size();
        r["history"] = history_.size();
        return r;
    }
    if (type == "set_overlay") {
        const auto mode = field<std::string>(m, "mode");
        if (mode == "none") {
            overlay_ = OverlayMode::None;
        } else if (mode == "selection") {
            overlay_ = OverlayMode::Selection;
        } else if (mode == "segment_everything") {
            overlay_ = OverlayMode::SegmentEverything;
        } else {
            bad_request("overlay mode must be none, selection or segment_everything");
        }
        overlay_level_ = level_field(m, overlay_level_);
        return ack;
    }
    if (type == "request_frame") {
        return frame();
    }
    bad_request(fmt::format("unknown message type '{}'", type));
}

nlohmann::json Session::on_click(const nlohmann::json& m) {
    const int x = field<int>(m, "x"), y = field<int>(m, "y");
    if (x < 0 || y < 0 || x >= camera_.width || y >= camera_.height) bad_request("click outside the frame");
    const Level level = level_field(m, Level::Coarse);
    Selection sel = engine_->click_select(camera_, x, y, level);

    nlohmann::json levels = nlohmann::json::object();
    for (Level lv : kLevels) {
        if (lv == level) {
            levels[std::string(to_string(lv))] = sel.cluster_ids;
            continue;
        }
        try {
            levels[std::string(to_string(lv))] = engine_->click_select(camera_, x, y, lv).cluster_ids;
        } catch (const Error&) {
            levels[std::string(to_string(lv))] = nlohmann::json::array();
        }
    }
    nlohmann::json r = {{"type", "selection"},
                        {"level", std::string(to_string(level))},
                        {"cluster_ids", sel.cluster_ids},
                        {"levels", levels},
                        {"gaussian_count", sel.gaussian_ids.size()}};
    if (m.value("with_ids", false)) r["gaussian_ids"] = sel.gaussian_ids;
    selection_ = std::move(sel);
    return r;
}

nlohmann::json Session::on_edit(const nlohmann::json& m) {
    const auto op_name = field<std::string>(m, "op");
    const nlohmann::json params = m.contains("params") ? m.at("params") : nlohmann::json::object();
    if (!params.is_object()) bad_request("params must be an object");

    RecordedEdit e;
    if (op_name == "remove") {
        e.op.kind = EditKind::Remove;
    } else if (op_name == "translate") {
        e.op.kind = EditKind::Translate;
        e.op.vector = vector_field(params);
    } else if (op_name == "duplicate") {
        e.op.kind = EditKind::Duplicate;
        e.op.vector = params.contains("vector") ? vector_field(params) : Eigen::Vector3f::Zero();
    } else if (op_name == "rescale") {
        e.op.kind = EditKind::Rescale;
        e.op.factor = field<float>(params, "factor");
    } else {
        bad_request("edit op must be remove, translate, rescale or duplicate");
    }

    if (params.contains("gaussian_ids")) {
        e.gaussian_ids = field<std::vector<std::uint32_t>>(params, "gaussian_ids");
        std::sort(e.gaussian_ids.begin(), e.gaussian_ids.end());
        e.gaussian_ids.erase(std::unique(e.gaussian_ids.begin(), e.gaussian_ids.end()), e.gaussian_ids.end());
    } else if (selection_) {
        e.gaussian_ids = selection_->gaussian_ids;
    }
    if (e.gaussian_ids.empty()) fail(ErrorCode::Precondition, "edit needs a selection or explicit gaussian_ids");

    // Validates before the history changes.
    EditedScene next = edit(scene_, checkpoint_.features, e.gaussian_ids, e.op);
    history_.push_back(std::move(e));
    engine_.reset();
    scene_ = std::move(next.scene);
    checkpoint_.features = std::move(next.features);
    engine_ = std::make_unique<SegmentationEngine>(scene_, checkpoint_, shared_->settings);
    selection_.reset();
    return {{"type", "ack"}, {"gaussians", scene_.size()}, {"history", history_.size()}};
}

nlohmann::json Session::frame() {
    const RenderBuffers rb = engine_->render_features(camera_, true);
    io::Image8 img{rb.width, rb.height, 3, color_to_rgb8(rb.color)};
    nlohmann::json r = {{"type", "frame"},
                        {"width", rb.width},
                        {"height", rb.height},
                        {"encoding", "png"},
                        {"payload", base64_encode(io::encode_png(img))}};
    if (overlay_ == OverlayMode::None) return r;

    std::vector<std::uint32_t> ids(rb.pixel_count(), 0);
    Level level = overlay_level_;
    if (overlay_ == OverlayMode::SegmentEverything) {
        ids = engine_->segment_everything(rb, level);
        require_16bit(ids);
    } else if (selection_) {
        level = selection_->level;
        const auto mask = engine_->selection_mask(rb, level, selection_->cluster_ids);
        for (std::size_t p = 0; p < mask.size(); ++p) ids[p] = mask[p];
    }
    io::Image16 overlay{rb.width, rb.height, std::vector<std::uint16_t>(ids.begin(), ids.end())};
    r["overlay"] = overlay_ == OverlayMode::SegmentEverything ? "segment_everything" : "selection";
    r["overlay_level"] = std::string(to_string(level));
    r["overlay_ids"] = base64_encode(io::encode_png(overlay));
    return r;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) fail(ErrorCode::Format, "base64 length is not a multiple of 4");
    std::vector<std::uint8_t> out(3 * (text.size() / 4));
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
    if (n < 0) fail(ErrorCode::Format, "malformed base64");
    std::size_t pad = 0;
    for (std::size_t k = text.size(); k > 0 && text[k - 1] == '=' && pad < 2; --k) ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

std::vector<std::uint8_t> color_to_rgb8(const std::vector<float>& color) {
    std::vector<std::uint8_t> out(color.size());
    for (std::size_t k = 0; k < color.size(); ++k) {
        out[k] = static_cast<std::uint8_t>(std::lround(std::clamp(color[k], 0.0f, 1.0f) * 255.0f));
    }
    return out;
}

} // namespace cgseg::server
