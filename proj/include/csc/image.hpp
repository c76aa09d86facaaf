#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace csc {

struct ImageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Rgb = std::array<std::uint8_t, 3>;

// 8-bit RGB raster, row-major.
struct FundusImage {
    int width = 0;
    int height = 0;
    std::vector<Rgb> pixels;

    FundusImage() = default;
    FundusImage(int w, int h, Rgb fill = {0, 0, 0})
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {
        if (w < 1 || h < 1) throw ImageError("image dimensions must be >= 1");
    }

    Rgb& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    const Rgb& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

    bool operator==(const FundusImage&) const = default;
};

struct GrayChannel {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> values;

    GrayChannel() = default;
    GrayChannel(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {
        if (w < 1 || h < 1) throw ImageError("channel dimensions must be >= 1");
    }

    std::uint8_t& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }

    bool operator==(const GrayChannel&) const = default;
};

struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<char> bits;  // 0/1, row-major

    BinaryMask() = default;
    BinaryMask(int w, int h, bool fill = false)
        : width(w), height(h), bits(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

    bool get(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
};

// Round half away from zero; the single rounding rule for produced pixels.
inline int round_half_away(double v) { return static_cast<int>(std::lround(v)); }

inline std::uint8_t clamp_u8(double v) {
    int r = round_half_away(v);
    if (r < 0) return 0;
    if (r > 255) return 255;
    return static_cast<std::uint8_t>(r);
}

}  // namespace csc
