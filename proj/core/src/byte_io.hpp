#pragma once

#include "csl/error.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>

namespace csl::detail {

inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
}

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

inline void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

/// Bounds-checked little-endian reader that reports byte offsets.
class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    std::uint64_t offset() const { return pos_; }
    std::uint64_t remaining() const { return bytes_.size() - pos_; }

    void need(std::uint64_t count, const char* what) const {
        if (remaining() < count) {
            throw FormatError(pos_, std::string("truncated ") + what + ": need " +
                                        std::to_string(count) + " bytes, have " +
                                        std::to_string(remaining()));
        }
    }

    std::string_view take(std::uint64_t count, const char* what) {
        need(count, what);
        auto out = bytes_.substr(pos_, count);
        pos_ += count;
        return out;
    }

    std::uint16_t u16(const char* what) {
        auto b = take(2, what);
        return static_cast<std::uint16_t>(byte(b, 0) | (byte(b, 1) << 8));
    }

    std::uint32_t u32(const char* what) {
        auto b = take(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(byte(b, i)) << (8 * i);
        }
        return v;
    }

    std::uint64_t u64(const char* what) {
        auto b = take(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(byte(b, i)) << (8 * i);
        }
        return v;
    }

    float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

private:
    static std::uint32_t byte(std::string_view b, int i) {
        return static_cast<std::uint8_t>(b[static_cast<std::size_t>(i)]);
    }

    std::string_view bytes_;
    std::uint64_t pos_ = 0;
};

}  // namespace csl::detail
