#pragma once

#include "cgseg/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cgseg {

/// Segment IDs are made unique across views: global = view_id·stride + local.
inline constexpr std::int32_t kViewIdStride = 65536;

constexpr std::int32_t global_segment_id(std::uint32_t view_id, std::int32_t local_id) {
    return static_cast<std::int32_t>(view_id) * kViewIdStride + local_id;
}
constexpr std::int32_t local_segment_id(std::int32_t global_id) { return global_id % kViewIdStride; }

struct BBox {
    std::uint32_t x = 0, y = 0, width = 0, height = 0;
    friend bool operator==(const BBox&, const BBox&) = default;
};

/// One raw (possibly overlapping) segment. `rle` alternates zero and one runs
/// over the row-major bbox window, starting with a (possibly empty) zero run.
struct RawSegment {
    std::int32_t id = 0; // global id
    std::uint32_t area = 0;
    BBox bbox;
    std::vector<std::uint32_t> rle;
    friend bool operator==(const RawSegment&, const RawSegment&) = default;
};

struct RawSegments {
    std::uint32_t view_id = 0;
    int width = 0;
    int height = 0;
    std::vector<RawSegment> segments;
    friend bool operator==(const RawSegments&, const RawSegments&) = default;
};

std::vector<std::uint32_t> encode_rle(std::span<const std::uint8_t> bits);
/// Throws Format when the runs do not add up to `length`.
std::vector<std::uint8_t> decode_rle(std::span<const std::uint32_t> rle, std::size_t length);

/// Builds a segment from a full-frame 0/1 mask (W·H, row-major). The bbox is
/// tight; an empty mask yields area 0 and an empty bbox.
RawSegment make_segment(std::int32_t id, int width, int height, std::span<const std::uint8_t> mask);
/// Full-frame 0/1 mask of a segment; validates the RLE against bbox and area.
std::vector<std::uint8_t> decode_segment(const RawSegment& segment, int width, int height);

/// Per-view coarse/fine ID maps (global IDs), 0 = unassigned.
struct TwoLevelMask {
    std::uint32_t view_id = 0;
    int width = 0;
    int height = 0;
    std::vector<std::int32_t> coarse;
    std::vector<std::int32_t> fine;

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
    const std::vector<std::int32_t>& at(Level level) const { return level == Level::Coarse ? coarse : fine; }
    std::vector<std::int32_t>& at(Level level) { return level == Level::Coarse ? coarse : fine; }
    friend bool operator==(const TwoLevelMask&, const TwoLevelMask&) = default;
};

/// Coarse takes the largest covering segment, fine the smallest; equal areas
/// resolve to the lower id at both levels.
TwoLevelMask assign_levels(const RawSegments& raw);

/// "CGSG" file: magic, u32 view_id, u32 W, u32 H, u32 count; per segment u32
/// local id, u32 area, u32 bbox[4] (x, y, w, h), u32 rle_len, u32 runs[rle_len].
void save_segments(const RawSegments& raw, const std::filesystem::path& path);
RawSegments load_segment_file(const std::filesystem::path& path);
/// All *.cgsg files of a directory, ordered by view id.
std::vector<RawSegments> load_segments(const std::filesystem::path& dir);

/// Writes `coarse_<view>.png` and `fine_<view>.png` (16-bit, local IDs) into `dir`.
void save_two_level(const TwoLevelMask& mask, const std::filesystem::path& dir);
TwoLevelMask load_two_level(const std::filesystem::path& dir, std::uint32_t view_id);

/// Reads a folder written by SAM's automatic mask generator script (one binary
/// PNG per mask plus metadata.csv). Mask k becomes local id k + 1.
RawSegments import_sam_folder(const std::filesystem::path& dir, std::uint32_t view_id);

} // namespace cgseg
