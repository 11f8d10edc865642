#include "cgseg/io/ply.hpp"

#include "cgseg/error.hpp"
#include "cgseg/io/binary.hpp"

#include <cmath>
#include <fmt/format.h>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>

namespace cgseg::io {

namespace {

enum class PlyType { I8, U8, I16, U16, I32, U32, F32, F64 };

std::optional<PlyType> parse_type(const std::string& name) {
    static const std::unordered_map<std::string, PlyType> table = {
        {"char", PlyType::I8},     {"int8", PlyType::I8},     {"uchar", PlyType::U8},
        {"uint8", PlyType::U8},    {"short", PlyType::I16},   {"int16", PlyType::I16},
        {"ushort", PlyType::U16},  {"uint16", PlyType::U16},  {"int", PlyType::I32},
        {"int32", PlyType::I32},   {"uint", PlyType::U32},    {"uint32", PlyType::U32},
        {"float", PlyType::F32},   {"float32", PlyType::F32}, {"double", PlyType::F64},
        {"float64", PlyType::F64},
    };
    auto it = table.find(name);
    if (it == table.end()) return std::nullopt;
    return it->second;
}

std::size_t type_size(PlyType t) {
    switch (t) {
    case PlyType::I8:
    case PlyType::U8: return 1;
    case PlyType::I16:
    case PlyType::U16: return 2;
    case PlyType::I32:
    case PlyType::U32:
    case PlyType::F32: return 4;
    case PlyType::F64: return 8;
    }
    return 0;
}

double read_value(ByteReader& r, PlyType t) {
    switch (t) {
    case PlyType::I8: return r.get<std::int8_t>();
    case PlyType::U8: return r.get<std::uint8_t>();
    case PlyType::I16: return r.get<std::int16_t>();
    case PlyType::U16: return r.get<std::uint16_t>();
    case PlyType::I32: return r.get<std::int32_t>();
    case PlyType::U32: return r.get<std::uint32_t>();
    case PlyType::F32: return r.get<float>();
    case PlyType::F64: return r.get<double>();
    }
    return 0.0;
}

struct Property {
    std::string name;
    PlyType type;
};

struct Header {
    std::size_t vertex_count = 0;
    std::vector<Property> properties;
    std::size_t data_offset = 0;
};

Header parse_header(const std::vector<std::uint8_t>& bytes, const std::string& what) {
    static constexpr std::string_view kEnd = "end_header";
    std::string text;
    std::size_t pos = 0;
    Header header;
    bool in_vertex = false, seen_vertex = false, seen_format = false;
    int line_no = 0;
    while (true) {
        const auto nl = std::find(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end(), '\n');
        if (nl == bytes.end()) fail(ErrorCode::Format, what + ": unterminated PLY header");
        std::string line(bytes.begin() + static_cast<std::ptrdiff_t>(pos), nl);
        pos = static_cast<std::size_t>(nl - bytes.begin()) + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        ++line_no;
        if (line_no == 1) {
            if (line != "ply") fail(ErrorCode::Format, what + ": not a PLY file");
            continue;
        }
        std::istringstream ls(line);
        std::string keyword;
        ls >> keyword;
        if (keyword == "format") {
            std::string fmt_name, version;
            ls >> fmt_name >> version;
            if (fmt_name != "binary_little_endian") {
                fail(ErrorCode::Format, what + ": only binary_little_endian PLY is supported, got " + fmt_name);
            }
            seen_format = true;
        } else if (keyword == "element") {
            std::string name;
            std::size_t count = 0;
            ls >> name >> count;
            if (seen_vertex) {
                in_vertex = false; // later elements are ignored; vertex data comes first
            } else if (name == "vertex") {
                header.vertex_count = count;
                in_vertex = seen_vertex = true;
            } else {
                fail(ErrorCode::Format, what + ": element '" + name + "' precedes vertex data");
            }
        } else if (keyword == "property") {
            if (!in_vertex) continue;
            std::string type_name, name;
            ls >> type_name;
            if (type_name == "list") fail(ErrorCode::Format, what + ": list properties on vertices are not supported");
            ls >> name;
            auto type = parse_type(type_name);
            if (!type) fail(ErrorCode::Format, what + ": unknown property type '" + type_name + "'");
            header.properties.push_back({name, *type});
        } else if (keyword == kEnd) {
            break;
        } else if (keyword == "comment" || keyword == "obj_info" || keyword.empty()) {
            continue;
        } else {
            fail(ErrorCode::Format, what + ": unexpected header line '" + line + "'");
        }
    }
    if (!seen_format) fail(ErrorCode::Format, what + ": missing format line");
    if (!seen_vertex) fail(ErrorCode::Format, what + ": missing vertex element");
    header.data_offset = pos;
    return header;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

} // namespace

GaussianScene load_scene(const std::filesystem::path& path) {
    const std::string what = path.string();
    const auto bytes = read_file(path);
    const Header header = parse_header(bytes, what);

    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t k = 0; k < header.properties.size(); ++k) index[header.properties[k].name] = k;

    auto require = [&](const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) fail(ErrorCode::Format, what + ": missing required property '" + name + "'");
        return it->second;
    };
    const std::size_t px = require("x"), py = require("y"), pz = require("z");
    const std::size_t s0 = require("scale_0"), s1 = require("scale_1"), s2 = require("scale_2");
    const std::size_t r0 = require("rot_0"), r1 = require("rot_1"), r2 = require("rot_2"), r3 = require("rot_3");
    const std::size_t op = require("opacity");
    const std::size_t dc0 = require("f_dc_0"), dc1 = require("f_dc_1"), dc2 = require("f_dc_2");

    std::size_t rest_count = 0;
    while (index.count("f_rest_" + std::to_string(rest_count))) ++rest_count;
    int degree = 0;
    switch (rest_count) {
    case 0: degree = 0; break;
    case 9: degree = 1; break;
    case 24: degree = 2; break;
    case 45: degree = 3; break;
    default: fail(ErrorCode::Format, fmt::format("{}: {} f_rest properties do not match an SH degree", what, rest_count));
    }
    std::vector<std::size_t> rest(rest_count);
    for (std::size_t k = 0; k < rest_count; ++k) rest[k] = index.at("f_rest_" + std::to_string(k));

    if (header.vertex_count == 0) fail(ErrorCode::EmptyScene, what + ": scene has zero Gaussians");

    std::size_t stride = 0;
    for (const auto& p : header.properties) stride += type_size(p.type);
    const std::size_t needed = header.data_offset + stride * header.vertex_count;
    if (bytes.size() < needed) fail(ErrorCode::Format, what + ": vertex data truncated");

    ByteReader reader(std::span<const std::uint8_t>(bytes).subspan(header.data_offset), what);
    GaussianScene scene;
    scene.sh_degree = degree;
    scene.reserve(header.vertex_count);
    const int coeffs_per_channel = sh_coeff_count(degree) - 1;
    std::vector<double> v(header.properties.size());
    Gaussian g;
    g.sh.resize(static_cast<std::size_t>(scene.sh_stride()));
    for (std::size_t i = 0; i < header.vertex_count; ++i) {
        for (std::size_t k = 0; k < header.properties.size(); ++k) v[k] = read_value(reader, header.properties[k].type);
        g.position = Eigen::Vector3f(static_cast<float>(v[px]), static_cast<float>(v[py]), static_cast<float>(v[pz]));
        g.scale = Eigen::Vector3d(std::exp(v[s0]), std::exp(v[s1]), std::exp(v[s2])).cast<float>();
        Eigen::Vector4d q(v[r0], v[r1], v[r2], v[r3]);
        const double qn = q.norm();
        if (!(qn > 0.0) || !std::isfinite(qn)) {
            fail(ErrorCode::Format, fmt::format("{}: Gaussian {} has a degenerate quaternion", what, i));
        }
        g.rotation = (q / qn).cast<float>();
        g.opacity = static_cast<float>(sigmoid(v[op]));
        g.sh[0] = static_cast<float>(v[dc0]);
        g.sh[1] = static_cast<float>(v[dc1]);
        g.sh[2] = static_cast<float>(v[dc2]);
        // File layout is channel-major: f_rest[c * coeffs_per_channel + k].
        for (int c = 0; c < 3; ++c) {
            for (int k = 0; k < coeffs_per_channel; ++k) {
                g.sh[static_cast<std::size_t>((k + 1) * 3 + c)] =
                    static_cast<float>(v[rest[static_cast<std::size_t>(c * coeffs_per_channel + k)]]);
            }
        }
        scene.push_back(g);
    }
    return scene;
}

void save_scene(const GaussianScene& scene, const std::filesystem::path& path) {
    const int coeffs_per_channel = sh_coeff_count(scene.sh_degree) - 1;
    std::string header = "ply\nformat binary_little_endian 1.0\n";
    header += fmt::format("element vertex {}\n", scene.size());
    for (const char* name : {"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"}) {
        header += fmt::format("property float {}\n", name);
    }
    for (int k = 0; k < 3 * coeffs_per_channel; ++k) header += fmt::format("property float f_rest_{}\n", k);
    header += "property float opacity\n";
    for (const char* name : {"scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"}) {
        header += fmt::format("property float {}\n", name);
    }
    header += "end_header\n";

    ByteWriter w;
    w.magic(header);
    for (std::size_t i = 0; i < scene.size(); ++i) {
        const auto& p = scene.positions[i];
        w.put(p.x());
        w.put(p.y());
        w.put(p.z());
        w.put(0.0f);
        w.put(0.0f);
        w.put(0.0f);
        const float* sh = scene.sh_of(i);
        w.put(sh[0]);
        w.put(sh[1]);
        w.put(sh[2]);
        for (int c = 0; c < 3; ++c) {
            for (int k = 0; k < coeffs_per_channel; ++k) w.put(sh[(k + 1) * 3 + c]);
        }
        w.put(static_cast<float>(logit(static_cast<double>(scene.opacities[i]))));
        for (int a = 0; a < 3; ++a) w.put(static_cast<float>(std::log(static_cast<double>(scene.scales[i][a]))));
        for (int a = 0; a < 4; ++a) w.put(scene.rotations[i][a]);
    }
    write_file(path, w.bytes());
}

} // namespace cgseg::io
