#include "cgseg/io/cameras.hpp"

#include "cgseg/error.hpp"
#include "cgseg/io/binary.hpp"

#include <fmt/format.h>

namespace cgseg::io {

Camera camera_from_json(const nlohmann::json& j) {
    Camera c;
    try {
        c.width = j.at("width").get<int>();
        c.height = j.at("height").get<int>();
        c.fx = j.at("fx").get<double>();
        c.fy = j.at("fy").get<double>();
        c.cx = j.at("cx").get<double>();
        c.cy = j.at("cy").get<double>();
        const auto& m = j.at("world_to_camera");
        if (!m.is_array() || m.size() != 16) fail(ErrorCode::Format, "world_to_camera must hold 16 numbers");
        for (int r = 0; r < 4; ++r) {
            for (int k = 0; k < 4; ++k) c.world_to_camera(r, k) = m[static_cast<std::size_t>(r * 4 + k)].get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Format, std::string("camera: ") + e.what());
    }
    try {
        c.validate();
    } catch (const Error& e) {
        fail(ErrorCode::Format, e.what());
    }
    return c;
}

nlohmann::json camera_to_json(const Camera& c) {
    nlohmann::json m = nlohmann::json::array();
    for (int r = 0; r < 4; ++r) {
        for (int k = 0; k < 4; ++k) m.push_back(c.world_to_camera(r, k));
    }
    return {{"width", c.width}, {"height", c.height}, {"fx", c.fx}, {"fy", c.fy},
            {"cx", c.cx},       {"cy", c.cy},         {"world_to_camera", m}};
}

std::vector<Camera> load_cameras(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Format, fmt::format("{}: {}", path.string(), e.what()));
    }
    if (!doc.is_array()) fail(ErrorCode::Format, path.string() + ": expected a JSON array of cameras");
    std::vector<Camera> cameras;
    for (std::size_t k = 0; k < doc.size(); ++k) {
        try {
            cameras.push_back(camera_from_json(doc[k]));
        } catch (const Error& e) {
            fail(ErrorCode::Format, fmt::format("{}: camera {}: {}", path.string(), k, e.what()));
        }
    }
    return cameras;
}

void save_cameras(const std::vector<Camera>& cameras, const std::filesystem::path& path) {
    nlohmann::json doc = nlohmann::json::array();
    for (const auto& c : cameras) doc.push_back(camera_to_json(c));
    const std::string text = doc.dump(1);
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

} // namespace cgseg::io
