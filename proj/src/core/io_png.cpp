#include "cgseg/io/png.hpp"

#include "cgseg/error.hpp"
#include "cgseg/io/binary.hpp"

#include <png.h>

#include <csetjmp>
#include <cstring>

namespace cgseg::io {

namespace {

void on_png_error(png_structp png, png_const_charp message) {
    auto* what = static_cast<std::string*>(png_get_error_ptr(png));
    *what = message;
    png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

void append_bytes(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

void flush_nothing(png_structp) {}

std::vector<std::uint8_t> encode(int width, int height, int color_type, int bit_depth,
                                 const std::vector<png_bytep>& rows) {
    std::vector<std::uint8_t> out;
    std::string error;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
    if (!png) fail(ErrorCode::Io, "png: out of memory");
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorCode::Io, "png encode: " + error);
    }
    png_set_write_fn(png, &out, append_bytes, flush_nothing);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 1);
    png_write_info(png, info);
    if (bit_depth == 16) png_set_swap(png); // samples are host-order little-endian
    png_write_image(png, const_cast<png_bytepp>(rows.data()));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

struct MemorySource {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;
};

void read_bytes(png_structp png, png_bytep data, png_size_t length) {
    auto* src = static_cast<MemorySource*>(png_get_io_ptr(png));
    if (src->bytes.size() - src->pos < length) png_error(png, "truncated");
    std::memcpy(data, src->bytes.data() + src->pos, length);
    src->pos += length;
}

/// Decodes into rows of `bit_depth` (8 or 16) samples; returns channel count.
template <typename Sample>
int decode(std::span<const std::uint8_t> bytes, const std::string& what, int& width, int& height,
           std::vector<Sample>& pixels, bool force_gray) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) fail(ErrorCode::Format, what + ": not a PNG file");
    std::string error;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, on_png_error, on_png_warning);
    if (!png) fail(ErrorCode::Io, "png: out of memory");
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail(ErrorCode::Format, what + ": " + error);
    }
    MemorySource src{bytes, 0};
    png_set_read_fn(png, &src, read_bytes);
    png_read_info(png, info);
    const int color_type = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if constexpr (sizeof(Sample) == 1) {
        if (depth == 16) png_set_strip_16(png);
    } else {
        if (depth < 16) png_set_expand_16(png);
        png_set_swap(png);
    }
    if (force_gray) {
        if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
        if (color_type == PNG_COLOR_TYPE_RGB || color_type == PNG_COLOR_TYPE_RGB_ALPHA ||
            color_type == PNG_COLOR_TYPE_PALETTE) {
            png_set_rgb_to_gray_fixed(png, 1, -1, -1);
        }
    }
    png_read_update_info(png, info);
    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    const int channels = png_get_channels(png, info);
    pixels.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * static_cast<std::size_t>(channels),
                  Sample(0));
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) {
        rows[static_cast<std::size_t>(y)] =
            reinterpret_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(y) * static_cast<std::size_t>(width) *
                                                            static_cast<std::size_t>(channels));
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return channels;
}

} // namespace

std::vector<std::uint8_t> encode_png(const Image8& image) {
    int color_type = 0;
    switch (image.channels) {
    case 1: color_type = PNG_COLOR_TYPE_GRAY; break;
    case 3: color_type = PNG_COLOR_TYPE_RGB; break;
    case 4: color_type = PNG_COLOR_TYPE_RGB_ALPHA; break;
    default: fail(ErrorCode::ContractViolation, "png: unsupported channel count");
    }
    const std::size_t stride = static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.channels);
    if (image.pixels.size() != stride * static_cast<std::size_t>(image.height)) {
        fail(ErrorCode::ContractViolation, "png: pixel buffer size mismatch");
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
    for (std::size_t y = 0; y < rows.size(); ++y) rows[y] = const_cast<png_bytep>(image.pixels.data() + y * stride);
    return encode(image.width, image.height, color_type, 8, rows);
}

std::vector<std::uint8_t> encode_png(const Image16& image) {
    const std::size_t stride = static_cast<std::size_t>(image.width);
    if (image.pixels.size() != stride * static_cast<std::size_t>(image.height)) {
        fail(ErrorCode::ContractViolation, "png: pixel buffer size mismatch");
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
    for (std::size_t y = 0; y < rows.size(); ++y) {
        rows[y] = reinterpret_cast<png_bytep>(const_cast<std::uint16_t*>(image.pixels.data() + y * stride));
    }
    return encode(image.width, image.height, PNG_COLOR_TYPE_GRAY, 16, rows);
}

void write_png(const Image8& image, const std::filesystem::path& path) { write_file(path, encode_png(image)); }
void write_png(const Image16& image, const std::filesystem::path& path) { write_file(path, encode_png(image)); }

Image8 decode_png8(std::span<const std::uint8_t> bytes, const std::string& what) {
    Image8 image;
    image.channels = decode(bytes, what, image.width, image.height, image.pixels, false);
    return image;
}

Image8 read_png8(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return decode_png8(bytes, path.string());
}

Image16 decode_png16(std::span<const std::uint8_t> bytes, const std::string& what) {
    Image16 image;
    const int channels = decode(bytes, what, image.width, image.height, image.pixels, true);
    if (channels != 1) fail(ErrorCode::Format, what + ": expected a single-channel PNG");
    return image;
}

Image16 read_png16(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return decode_png16(bytes, path.string());
}

} // namespace cgseg::io
