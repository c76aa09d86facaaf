#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "csc/ellipse.hpp"
#include "csc/image.hpp"

namespace csc {

inline GrayChannel intensity_plane(const FundusImage& img) {
    GrayChannel ch(img.width, img.height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const auto& p = img.pixels[i];
        ch.values[i] = static_cast<std::uint8_t>(round_half_away((p[0] + p[1] + p[2]) / 3.0));
    }
    return ch;
}

// Equalization lookup table from a histogram of the considered pixels.
// out(v) = round((cdf(v) - cdf_min) / (N - cdf_min) * 255); identity when the
// histogram has a single occupied bin.
inline std::array<std::uint8_t, 256> equalize_lut(const std::array<std::size_t, 256>& hist,
                                                  std::size_t n) {
    std::array<std::uint8_t, 256> lut{};
    std::size_t cdf_min = 0;
    for (std::size_t h : hist) {
        if (h > 0) {
            cdf_min = h;
            break;
        }
    }
    if (n == 0 || cdf_min == n) {
        for (int v = 0; v < 256; ++v) lut[v] = static_cast<std::uint8_t>(v);
        return lut;
    }
    std::size_t cdf = 0;
    for (int v = 0; v < 256; ++v) {
        cdf += hist[v];
        if (hist[v] == 0 && cdf == 0) {
            lut[v] = 0;
            continue;
        }
        double num = static_cast<double>(cdf) - static_cast<double>(cdf_min);
        double den = static_cast<double>(n) - static_cast<double>(cdf_min);
        lut[v] = clamp_u8(num / den * 255.0);
    }
    return lut;
}

inline GrayChannel equalize_gray(const GrayChannel& ch) {
    if (ch.values.empty()) throw ImageError("empty input");
    std::array<std::size_t, 256> hist{};
    for (std::uint8_t v : ch.values) ++hist[v];
    auto lut = equalize_lut(hist, ch.values.size());
    GrayChannel out(ch.width, ch.height);
    for (std::size_t i = 0; i < ch.values.size(); ++i) out.values[i] = lut[ch.values[i]];
    return out;
}

// Hue-preserving remap of one pixel given its intensity I and target intensity Ip.
// Darkening scales channels; brightening shifts them toward white so no channel
// leaves gamut (Naik-Murthy style rule).
inline Rgb hue_preserving_map(const Rgb& p, double intensity, double target) {
    if (intensity <= 0) return {0, 0, 0};
    double alpha = target / intensity;
    Rgb out;
    if (alpha <= 1.0) {
        for (int c = 0; c < 3; ++c) out[c] = clamp_u8(alpha * p[c]);
    } else {
        double beta = (target - intensity) / (255.0 - intensity);
        for (int c = 0; c < 3; ++c) out[c] = clamp_u8(p[c] + (255.0 - p[c]) * beta);
    }
    return out;
}

inline FundusImage equalize_color_hue_preserving(const FundusImage& img) {
    GrayChannel plane = intensity_plane(img);
    GrayChannel eq = equalize_gray(plane);
    FundusImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        out.pixels[i] = hue_preserving_map(img.pixels[i], plane.values[i], eq.values[i]);
    return out;
}

// Variant restricting the histogram to mask-true pixels; pixels outside the mask
// pass through unchanged. Used by the pipeline so the black background does not
// dominate the histogram.
inline FundusImage equalize_color_hue_preserving(const FundusImage& img, const BinaryMask& mask) {
    if (mask.width != img.width || mask.height != img.height)
        throw ImageError("mask dimensions mismatch");
    GrayChannel plane = intensity_plane(img);
    std::array<std::size_t, 256> hist{};
    std::size_t n = 0;
    for (std::size_t i = 0; i < plane.values.size(); ++i) {
        if (mask.bits[i]) {
            ++hist[plane.values[i]];
            ++n;
        }
    }
    if (n == 0) throw ImageError("empty input");
    auto lut = equalize_lut(hist, n);
    FundusImage out = img;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        if (mask.bits[i])
            out.pixels[i] = hue_preserving_map(img.pixels[i], plane.values[i], lut[plane.values[i]]);
    }
    return out;
}

inline BinaryMask ellipse_mask(const Ellipse& e, int width, int height) {
    BinaryMask m(width, height);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) m.set(x, y, e.contains(x, y));
    return m;
}

inline FundusImage mask_outside_ellipse(const FundusImage& img, const Ellipse& e) {
    if (!(e.a > 0) || !(e.b > 0)) throw ImageError("degenerate ellipse");
    FundusImage out = img;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (!e.contains(x, y)) out.at(x, y) = {0, 0, 0};
    return out;
}

// Axis-aligned bounding box of an ellipse, intersected with [0,w)x[0,h).
// Returns {x0, y0, x1, y1} inclusive, or throws if empty.
inline std::array<int, 4> ellipse_bbox(const Ellipse& e, int width, int height) {
    double ct = std::cos(e.theta), st = std::sin(e.theta);
    double ex = std::sqrt(e.a * e.a * ct * ct + e.b * e.b * st * st);
    double ey = std::sqrt(e.a * e.a * st * st + e.b * e.b * ct * ct);
    int x0 = std::max(0, round_half_away(e.cx - ex));
    int y0 = std::max(0, round_half_away(e.cy - ey));
    int x1 = std::min(width - 1, round_half_away(e.cx + ex));
    int y1 = std::min(height - 1, round_half_away(e.cy + ey));
    if (x0 > x1 || y0 > y1) throw ImageError("ellipse outside image");
    return {x0, y0, x1, y1};
}

inline FundusImage crop_to_ellipse_bbox(const FundusImage& img, const Ellipse& e) {
    auto [x0, y0, x1, y1] = ellipse_bbox(e, img.width, img.height);
    FundusImage out(x1 - x0 + 1, y1 - y0 + 1);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) out.at(x - x0, y - y0) = img.at(x, y);
    return out;
}

// Bilinear resize with pixel-center alignment: src = (i + 0.5) * scale - 0.5, clamped.
inline FundusImage resize_bilinear(const FundusImage& img, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1) throw ImageError("target dimensions must be >= 1");
    if (out_w == img.width && out_h == img.height) return img;
    FundusImage out(out_w, out_h);
    double sx = static_cast<double>(img.width) / out_w;
    double sy = static_cast<double>(img.height) / out_h;
    for (int oy = 0; oy < out_h; ++oy) {
        double fy = std::clamp((oy + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
        int y0 = static_cast<int>(fy);
        int y1 = std::min(y0 + 1, img.height - 1);
        double wy = fy - y0;
        for (int ox = 0; ox < out_w; ++ox) {
            double fx = std::clamp((ox + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
            int x0 = static_cast<int>(fx);
            int x1 = std::min(x0 + 1, img.width - 1);
            double wx = fx - x0;
            Rgb& dst = out.at(ox, oy);
            for (int c = 0; c < 3; ++c) {
                double top = (1.0 - wx) * img.at(x0, y0)[c] + wx * img.at(x1, y0)[c];
                double bot = (1.0 - wx) * img.at(x0, y1)[c] + wx * img.at(x1, y1)[c];
                dst[c] = clamp_u8((1.0 - wy) * top + wy * bot);
            }
        }
    }
    return out;
}

}  // namespace csc
