#pragma once

#include "cgseg/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cgseg::io {

/// Little-endian append-only byte buffer.
class ByteWriter {
public:
    void magic(std::string_view tag) { bytes_.insert(bytes_.end(), tag.begin(), tag.end()); }

    template <typename T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        std::array<unsigned char, sizeof(T)> raw;
        std::memcpy(raw.data(), &value, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
        bytes_.insert(bytes_.end(), raw.begin(), raw.end());
    }

    void put_f32s(std::span<const float> values) {
        if constexpr (std::endian::native == std::endian::little) {
            const auto* p = reinterpret_cast<const unsigned char*>(values.data());
            bytes_.insert(bytes_.end(), p, p + values.size_bytes());
        } else {
            for (float v : values) put(v);
        }
    }

    void append(std::span<const std::uint8_t> raw) { bytes_.insert(bytes_.end(), raw.begin(), raw.end()); }

    const std::vector<std::uint8_t>& bytes() const { return bytes_; }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked little-endian reader; every overrun is a Format error.
class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, std::string what)
        : bytes_(bytes), what_(std::move(what)) {}

    void expect_magic(std::string_view tag) {
        need(tag.size());
        if (std::memcmp(bytes_.data() + pos_, tag.data(), tag.size()) != 0) {
            fail(ErrorCode::Format, what_ + ": bad magic, expected '" + std::string(tag) + "'");
        }
        pos_ += tag.size();
    }

    template <typename T>
    T get() {
        need(sizeof(T));
        std::array<unsigned char, sizeof(T)> raw;
        std::memcpy(raw.data(), bytes_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
        pos_ += sizeof(T);
        T value;
        std::memcpy(&value, raw.data(), sizeof(T));
        return value;
    }

    void get_f32s(std::span<float> out) {
        need(out.size_bytes());
        if constexpr (std::endian::native == std::endian::little) {
            std::memcpy(out.data(), bytes_.data() + pos_, out.size_bytes());
            pos_ += out.size_bytes();
        } else {
            for (float& v : out) v = get<float>();
        }
    }

    std::span<const std::uint8_t> take(std::size_t n) {
        need(n);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const { return bytes_.size() - pos_; }
    std::size_t position() const { return pos_; }

    void expect_end() const {
        if (remaining() != 0) {
            fail(ErrorCode::Format, what_ + ": " + std::to_string(remaining()) + " trailing bytes");
        }
    }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) fail(ErrorCode::Format, what_ + ": truncated");
    }

    std::span<const std::uint8_t> bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

} // namespace cgseg::io
