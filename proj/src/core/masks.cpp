#include "cgseg/masks.hpp"

#include "cgseg/error.hpp"
#include "cgseg/io/binary.hpp"
#include "cgseg/io/png.hpp"

#include <algorithm>
#include <charconv>
#include <fmt/format.h>
#include <limits>
#include <map>

namespace cgseg {

std::vector<std::uint32_t> encode_rle(std::span<const std::uint8_t> bits) {
    std::vector<std::uint32_t> runs;
    std::uint8_t current = 0;
    std::uint32_t length = 0;
    for (std::uint8_t b : bits) {
        const std::uint8_t v = b ? 1 : 0;
        if (v != current) {
            runs.push_back(length);
            current = v;
            length = 0;
        }
        ++length;
    }
    runs.push_back(length);
    return runs;
}

std::vector<std::uint8_t> decode_rle(std::span<const std::uint32_t> rle, std::size_t length) {
    std::vector<std::uint8_t> bits;
    bits.reserve(length);
    std::uint8_t value = 0;
    for (std::uint32_t run : rle) {
        if (run > length - bits.size()) fail(ErrorCode::Format, "RLE runs exceed the bbox window");
        bits.insert(bits.end(), run, value);
        value ^= 1;
    }
    if (bits.size() != length) {
        fail(ErrorCode::Format, fmt::format("RLE covers {} of {} window pixels", bits.size(), length));
    }
    return bits;
}

RawSegment make_segment(std::int32_t id, int width, int height, std::span<const std::uint8_t> mask) {
    if (mask.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
        fail(ErrorCode::ContractViolation, "segment mask size does not match the frame");
    }
    RawSegment seg;
    seg.id = id;
    int x0 = width, y0 = height, x1 = -1, y1 = -1;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (!mask[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]) continue;
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
            ++seg.area;
        }
    }
    if (seg.area == 0) {
        seg.rle = {0};
        return seg;
    }
    seg.bbox = {static_cast<std::uint32_t>(x0), static_cast<std::uint32_t>(y0), static_cast<std::uint32_t>(x1 - x0 + 1),
                static_cast<std::uint32_t>(y1 - y0 + 1)};
    std::vector<std::uint8_t> window;
    window.reserve(static_cast<std::size_t>(seg.bbox.width) * seg.bbox.height);
    for (int y = y0; y <= y1; ++y) {
        const auto* row = mask.data() + static_cast<std::size_t>(y) * static_cast<std::size_t>(width);
        window.insert(window.end(), row + x0, row + x1 + 1);
    }
    seg.rle = encode_rle(window);
    return seg;
}

namespace {

void check_bbox(const RawSegment& s, int width, int height) {
    if (static_cast<std::uint64_t>(s.bbox.x) + s.bbox.width > static_cast<std::uint64_t>(width) ||
        static_cast<std::uint64_t>(s.bbox.y) + s.bbox.height > static_cast<std::uint64_t>(height)) {
        fail(ErrorCode::Format, fmt::format("segment {} bbox leaves the {}x{} frame", s.id, width, height));
    }
}

std::vector<std::uint8_t> decode_window(const RawSegment& s, int width, int height) {
    check_bbox(s, width, height);
    auto bits = decode_rle(s.rle, static_cast<std::size_t>(s.bbox.width) * s.bbox.height);
    const auto ones = static_cast<std::uint32_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
    if (ones != s.area) fail(ErrorCode::Format, fmt::format("segment {}: area {} but RLE covers {}", s.id, s.area, ones));
    return bits;
}

} // namespace

std::vector<std::uint8_t> decode_segment(const RawSegment& segment, int width, int height) {
    const auto window = decode_window(segment, width, height);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), 0);
    std::size_t k = 0;
    for (std::uint32_t y = 0; y < segment.bbox.height; ++y) {
        for (std::uint32_t x = 0; x < segment.bbox.width; ++x, ++k) {
            mask[(segment.bbox.y + y) * static_cast<std::size_t>(width) + segment.bbox.x + x] = window[k];
        }
    }
    return mask;
}

TwoLevelMask assign_levels(const RawSegments& raw) {
    TwoLevelMask out;
    out.view_id = raw.view_id;
    out.width = raw.width;
    out.height = raw.height;
    const std::size_t P = out.pixel_count();
    out.coarse.assign(P, 0);
    out.fine.assign(P, 0);
    std::vector<std::uint32_t> coarse_area(P, 0), fine_area(P, std::numeric_limits<std::uint32_t>::max());

    for (const RawSegment& s : raw.segments) {
        if (s.id <= 0) fail(ErrorCode::Format, fmt::format("segment id {} must be positive", s.id));
        const auto window = decode_window(s, raw.width, raw.height);
        std::size_t k = 0;
        for (std::uint32_t y = 0; y < s.bbox.height; ++y) {
            for (std::uint32_t x = 0; x < s.bbox.width; ++x, ++k) {
                if (!window[k]) continue;
                const std::size_t p = (s.bbox.y + y) * static_cast<std::size_t>(raw.width) + s.bbox.x + x;
                if (out.coarse[p] == 0 || s.area > coarse_area[p] || (s.area == coarse_area[p] && s.id < out.coarse[p])) {
                    out.coarse[p] = s.id;
                    coarse_area[p] = s.area;
                }
                if (out.fine[p] == 0 || s.area < fine_area[p] || (s.area == fine_area[p] && s.id < out.fine[p])) {
                    out.fine[p] = s.id;
                    fine_area[p] = s.area;
                }
            }
        }
    }
    return out;
}

void save_segments(const RawSegments& raw, const std::filesystem::path& path) {
    io::ByteWriter w;
    w.magic("CGSG");
    w.put(raw.view_id);
    w.put(static_cast<std::uint32_t>(raw.width));
    w.put(static_cast<std::uint32_t>(raw.height));
    w.put(static_cast<std::uint32_t>(raw.segments.size()));
    const std::int32_t base = global_segment_id(raw.view_id, 0);
    for (const RawSegment& s : raw.segments) {
        const std::int32_t local = s.id - base;
        if (local <= 0 || local >= kViewIdStride) {
            fail(ErrorCode::ContractViolation,
                 fmt::format("segment id {} does not belong to view {}", s.id, raw.view_id));
        }
        w.put(static_cast<std::uint32_t>(local));
        w.put(s.area);
        w.put(s.bbox.x);
        w.put(s.bbox.y);
        w.put(s.bbox.width);
        w.put(s.bbox.height);
        w.put(static_cast<std::uint32_t>(s.rle.size()));
        for (std::uint32_t run : s.rle) w.put(run);
    }
    io::write_file(path, w.bytes());
}

RawSegments load_segment_file(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    const std::string what = path.string();
    io::ByteReader r(bytes, what);
    r.expect_magic("CGSG");
    RawSegments raw;
    raw.view_id = r.get<std::uint32_t>();
    raw.width = static_cast<int>(r.get<std::uint32_t>());
    raw.height = static_cast<int>(r.get<std::uint32_t>());
    if (raw.width <= 0 || raw.height <= 0) fail(ErrorCode::Format, what + ": empty frame size");
    if (raw.view_id >= static_cast<std::uint32_t>(std::numeric_limits<std::int32_t>::max() / kViewIdStride)) {
        fail(ErrorCode::Format, what + ": view id out of range");
    }
    const auto count = r.get<std::uint32_t>();
    raw.segments.reserve(std::min<std::size_t>(count, r.remaining() / 28));
    for (std::uint32_t k = 0; k < count; ++k) {
        RawSegment s;
        const auto local = r.get<std::uint32_t>();
        if (local == 0 || local >= static_cast<std::uint32_t>(kViewIdStride)) {
            fail(ErrorCode::Format, fmt::format("{}: local segment id {} out of range", what, local));
        }
        s.id = global_segment_id(raw.view_id, static_cast<std::int32_t>(local));
        s.area = r.get<std::uint32_t>();
        s.bbox.x = r.get<std::uint32_t>();
        s.bbox.y = r.get<std::uint32_t>();
        s.bbox.width = r.get<std::uint32_t>();
        s.bbox.height = r.get<std::uint32_t>();
        const auto len = r.get<std::uint32_t>();
        if (len > r.remaining() / 4) fail(ErrorCode::Format, what + ": truncated");
        s.rle.resize(len);
        for (auto& run : s.rle) run = r.get<std::uint32_t>();
        decode_window(s, raw.width, raw.height);
        raw.segments.push_back(std::move(s));
    }
    r.expect_end();
    return raw;
}

std::vector<RawSegments> load_segments(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) fail(ErrorCode::Io, dir.string() + ": not a directory");
    std::vector<RawSegments> views;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".cgsg") views.push_back(load_segment_file(entry.path()));
    }
    std::sort(views.begin(), views.end(), [](const RawSegments& a, const RawSegments& b) { return a.view_id < b.view_id; });
    for (std::size_t k = 1; k < views.size(); ++k) {
        if (views[k].view_id == views[k - 1].view_id) {
            fail(ErrorCode::Format, fmt::format("{}: duplicate view id {}", dir.string(), views[k].view_id));
        }
    }
    return views;
}

namespace {

std::filesystem::path level_png(const std::filesystem::path& dir, Level level, std::uint32_t view_id) {
    return dir / fmt::format("{}_{:04}.png", to_string(level), view_id);
}

} // namespace

void save_two_level(const TwoLevelMask& mask, const std::filesystem::path& dir) {
    const std::int32_t base = global_segment_id(mask.view_id, 0);
    for (Level level : kLevels) {
        io::Image16 image{mask.width, mask.height, {}};
        image.pixels.reserve(mask.pixel_count());
        for (std::int32_t id : mask.at(level)) image.pixels.push_back(static_cast<std::uint16_t>(id == 0 ? 0 : id - base));
        io::write_png(image, level_png(dir, level, mask.view_id));
    }
}

TwoLevelMask load_two_level(const std::filesystem::path& dir, std::uint32_t view_id) {
    TwoLevelMask mask;
    mask.view_id = view_id;
    const std::int32_t base = global_segment_id(view_id, 0);
    for (Level level : kLevels) {
        const auto path = level_png(dir, level, view_id);
        const io::Image16 image = io::read_png16(path);
        if (level == Level::Coarse) {
            mask.width = image.width;
            mask.height = image.height;
        } else if (image.width != mask.width || image.height != mask.height) {
            fail(ErrorCode::Format, path.string() + ": size differs from the coarse map");
        }
        auto& ids = mask.at(level);
        ids.reserve(image.pixels.size());
        for (std::uint16_t v : image.pixels) ids.push_back(v == 0 ? 0 : base + v);
    }
    return mask;
}

RawSegments import_sam_folder(const std::filesystem::path& dir, std::uint32_t view_id) {
    std::map<int, std::filesystem::path> masks;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
        const std::string stem = entry.path().stem().string();
        int index = -1;
        auto [ptr, ec] = std::from_chars(stem.data(), stem.data() + stem.size(), index);
        if (ec != std::errc() || ptr != stem.data() + stem.size() || index < 0) continue;
        masks.emplace(index, entry.path());
    }
    if (!std::filesystem::exists(dir / "metadata.csv")) {
        fail(ErrorCode::Format, dir.string() + ": missing metadata.csv (not a SAM mask folder)");
    }
    RawSegments raw;
    raw.view_id = view_id;
    for (const auto& [index, path] : masks) {
        if (index + 1 >= kViewIdStride) fail(ErrorCode::Format, path.string() + ": too many masks in one view");
        const io::Image8 image = io::read_png8(path);
        if (raw.segments.empty() && raw.width == 0) {
            raw.width = image.width;
            raw.height = image.height;
        } else if (image.width != raw.width || image.height != raw.height) {
            fail(ErrorCode::Format, path.string() + ": mask size differs from the rest of the view");
        }
        std::vector<std::uint8_t> bits(static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.height));
        for (std::size_t p = 0; p < bits.size(); ++p) {
            bits[p] = image.pixels[p * static_cast<std::size_t>(image.channels)] != 0;
        }
        RawSegment seg = make_segment(global_segment_id(view_id, index + 1), image.width, image.height, bits);
        if (seg.area > 0) raw.segments.push_back(std::move(seg));
    }
    if (raw.width == 0) fail(ErrorCode::Format, dir.string() + ": no mask PNGs found");
    return raw;
}

} // namespace cgseg
