#pragma once

#include <cmath>
#include <numbers>

#include "csc/image.hpp"
#include "csc/rng.hpp"

namespace csc {

struct AugmentParams {
    double rotation_max_deg = 15.0;
    double hflip_prob = 0.5;
    double vflip_prob = 0.5;
    double scale_lo = 0.9;
    double scale_hi = 1.1;
    double translate_frac = 0.1;
    std::uint64_t seed = 0;
};

// A concrete transform draw; applied as one composed affine resample.
struct AugmentDraw {
    double angle_rad = 0.0;
    bool hflip = false;
    bool vflip = false;
    double scale = 1.0;
    double tx = 0.0;  // pixels
    double ty = 0.0;
};

inline AugmentDraw draw_augment(const AugmentParams& p, int width, int height,
                                std::uint64_t draw_index) {
    CounterRng rng(p.seed, draw_index);
    AugmentDraw d;
    d.angle_rad = rng.uniform(-p.rotation_max_deg, p.rotation_max_deg) * std::numbers::pi / 180.0;
    d.hflip = rng.bernoulli(p.hflip_prob);
    d.vflip = rng.bernoulli(p.vflip_prob);
    d.scale = rng.uniform(p.scale_lo, p.scale_hi);
    d.tx = rng.uniform(-p.translate_frac, p.translate_frac) * width;
    d.ty = rng.uniform(-p.translate_frac, p.translate_frac) * height;
    return d;
}

// Applies rotate-about-center, flips, scale-about-center, translate (in that
// order) as a single bilinear resample. Out-of-bounds source pixels are black.
inline FundusImage apply_augment(const FundusImage& img, const AugmentDraw& d) {
    const double cx = (img.width - 1) / 2.0;
    const double cy = (img.height - 1) / 2.0;
    const double ca = std::cos(d.angle_rad), sa = std::sin(d.angle_rad);

    // Forward map of a centered coordinate (u, v):
    //   rotate -> flip -> scale -> translate
    // Inverted here to sample the source for each destination pixel.
    FundusImage out(img.width, img.height);
    for (int oy = 0; oy < img.height; ++oy) {
        for (int ox = 0; ox < img.width; ++ox) {
            double u = (ox - d.tx - cx) / d.scale;
            double v = (oy - d.ty - cy) / d.scale;
            if (d.hflip) u = -u;
            if (d.vflip) v = -v;
            // inverse rotation
            double su = ca * u + sa * v + cx;
            double sv = -sa * u + ca * v + cy;

            Rgb& dst = out.at(ox, oy);
            int x0 = static_cast<int>(std::floor(su));
            int y0 = static_cast<int>(std::floor(sv));
            double wx = su - x0, wy = sv - y0;
            double acc[3] = {0, 0, 0};
            for (int dy = 0; dy <= 1; ++dy) {
                for (int dx = 0; dx <= 1; ++dx) {
                    int xs = x0 + dx, ys = y0 + dy;
                    double w = (dx ? wx : 1.0 - wx) * (dy ? wy : 1.0 - wy);
                    if (w == 0.0 || xs < 0 || ys < 0 || xs >= img.width || ys >= img.height)
                        continue;
                    const Rgb& src = img.at(xs, ys);
                    for (int c = 0; c < 3; ++c) acc[c] += w * src[c];
                }
            }
            for (int c = 0; c < 3; ++c) dst[c] = clamp_u8(acc[c]);
        }
    }
    return out;
}

inline FundusImage augment_sample(const FundusImage& img, const AugmentParams& params,
                                  std::uint64_t draw_index) {
    return apply_augment(img, draw_augment(params, img.width, img.height, draw_index));
}

}  // namespace csc
