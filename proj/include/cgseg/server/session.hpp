#pragma once

#include "cgseg/camera.hpp"
#include "cgseg/checkpoint.hpp"
#include "cgseg/engine.hpp"
#include "cgseg/scene.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cgseg::server {

inline constexpr int kProtocolVersion = 1;

/// Immutable state shared by every session of a server.
struct SharedScene {
    GaussianScene scene;
    Checkpoint checkpoint;
    Camera default_camera;
    EngineSettings settings;
};

/// Throws Precondition when the checkpoint does not match the scene.
std::shared_ptr<const SharedScene> make_shared_scene(GaussianScene scene, Checkpoint checkpoint,
                                                     std::optional<Camera> camera = std::nullopt,
                                                     EngineSettings settings = {});

enum class OverlayMode { None, Selection, SegmentEverything };

struct RecordedEdit {
    std::vector<std::uint32_t> gaussian_ids;
    EditOp op;
};

/// State of one client connection. Messages are JSON objects with a "type"
/// and an optional "seq" that every reply echoes. Each message yields exactly
/// one reply; failures become {"type": "error", "code", "message"} and leave
/// the session usable.
class Session {
public:
    Session(std::shared_ptr<const SharedScene> shared, std::string id);

    nlohmann::json handle_text(std::string_view text);
    nlohmann::json handle(const nlohmann::json& message);

    const std::string& id() const { return id_; }
    const GaussianScene& scene() const { return scene_; }
    const Checkpoint& checkpoint() const { return checkpoint_; }
    const SegmentationEngine& engine() const { return *engine_; }
    const Camera& camera() const { return camera_; }
    const std::optional<Selection>& selection() const { return selection_; }
    const std::vector<RecordedEdit>& history() const { return history_; }

private:
    nlohmann::json dispatch(const std::string& type, const nlohmann::json& m);
    nlohmann::json frame();
    nlohmann::json on_click(const nlohmann::json& m);
    nlohmann::json on_edit(const nlohmann::json& m);
    /// Rebuilds the current scene from the base scene and the edit history.
    void replay();

    std::shared_ptr<const SharedScene> shared_;
    std::string id_;
    GaussianScene scene_;
    Checkpoint checkpoint_;
    std::unique_ptr<SegmentationEngine> engine_;
    Camera camera_;
    std::optional<Selection> selection_;
    OverlayMode overlay_ = OverlayMode::None;
    Level overlay_level_ = Level::Coarse;
    std::vector<RecordedEdit> history_;
};

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws Format on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// RGB8 image of a rendered color buffer (clamped to [0, 1], rounded).
std::vector<std::uint8_t> color_to_rgb8(const std::vector<float>& color);

} // namespace cgseg::server
