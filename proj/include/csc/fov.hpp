#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "csc/ellipse.hpp"
#include "csc/image.hpp"
#include "csc/imaging.hpp"

namespace csc {

struct ThresholdPolicy {
    enum class Kind { Fixed, Otsu } kind = Kind::Fixed;
    int fixed_threshold = 10;

    static ThresholdPolicy fixed(int t) { return {Kind::Fixed, t}; }
    static ThresholdPolicy otsu() { return {Kind::Otsu, 0}; }
};

// Threshold maximizing between-class variance over the 256-bin histogram.
inline int otsu_threshold(const GrayChannel& ch) {
    std::array<std::size_t, 256> hist{};
    for (std::uint8_t v : ch.values) ++hist[v];
    const double total = static_cast<double>(ch.values.size());
    double sum_all = 0;
    for (int v = 0; v < 256; ++v) sum_all += v * static_cast<double>(hist[v]);
    double best_var = -1.0;
    int best_t = 0;
    double w0 = 0, sum0 = 0;
    for (int t = 0; t < 256; ++t) {
        w0 += static_cast<double>(hist[t]);
        if (w0 == 0) continue;
        double w1 = total - w0;
        if (w1 == 0) break;
        sum0 += t * static_cast<double>(hist[t]);
        double mu0 = sum0 / w0;
        double mu1 = (sum_all - sum0) / w1;
        double var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (var > best_var) {
            best_var = var;
            best_t = t;
        }
    }
    return best_t;
}

inline BinaryMask segment_foreground(const GrayChannel& ch, ThresholdPolicy policy = {}) {
    if (ch.values.empty()) throw ImageError("empty input");
    int t = policy.kind == ThresholdPolicy::Kind::Otsu ? otsu_threshold(ch) : policy.fixed_threshold;
    BinaryMask m(ch.width, ch.height);
    for (std::size_t i = 0; i < ch.values.size(); ++i) m.bits[i] = ch.values[i] > t ? 1 : 0;
    return m;
}

// Foreground pixels with at least one 4-neighbor that is background or out of bounds.
inline std::vector<Point2> boundary_points(const BinaryMask& mask) {
    std::vector<Point2> pts;
    auto bg = [&mask](int x, int y) {
        return x < 0 || y < 0 || x >= mask.width || y >= mask.height || !mask.get(x, y);
    };
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.get(x, y) &&
                (bg(x - 1, y) || bg(x + 1, y) || bg(x, y - 1) || bg(x, y + 1)))
                pts.push_back({static_cast<double>(x), static_cast<double>(y)});
    return pts;
}

inline Ellipse detect_fov(const FundusImage& img, ThresholdPolicy policy = {},
                          double trim_fraction = 0.1, int iterations = 3) {
    GrayChannel plane = intensity_plane(img);
    BinaryMask mask = segment_foreground(plane, policy);
    std::vector<Point2> pts = boundary_points(mask);
    if (pts.size() < 6) throw FitError("insufficient points");
    Ellipse e = fit_ellipse_robust(pts, trim_fraction, iterations);
    double area = std::numbers::pi * e.a * e.b;
    double image_area = static_cast<double>(img.width) * img.height;
    if (area < 0.1 * image_area) throw FitError("implausible FOV: fitted area below 10% of image");
    return e;
}

}  // namespace csc
