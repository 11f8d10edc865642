#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cgseg::io {

struct Image8 {
    int width = 0;
    int height = 0;
    int channels = 0; // 1 gray, 3 RGB, 4 RGBA
    std::vector<std::uint8_t> pixels;
};

struct Image16 {
    int width = 0;
    int height = 0;
    std::vector<std::uint16_t> pixels; // single channel
};

std::vector<std::uint8_t> encode_png(const Image8& image);
std::vector<std::uint8_t> encode_png(const Image16& image);

void write_png(const Image8& image, const std::filesystem::path& path);
void write_png(const Image16& image, const std::filesystem::path& path);

/// Decodes any PNG into 8-bit samples (16-bit input is reduced, palette expanded).
Image8 read_png8(const std::filesystem::path& path);
Image8 decode_png8(std::span<const std::uint8_t> bytes, const std::string& what);
/// Decodes a single-channel PNG keeping 16-bit samples (8-bit input is widened).
Image16 read_png16(const std::filesystem::path& path);
Image16 decode_png16(std::span<const std::uint8_t> bytes, const std::string& what);

} // namespace cgseg::io
