#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "csc/dataset.hpp"
#include "csc/ellipse.hpp"
#include "csc/image.hpp"
#include "csc/image_io.hpp"
#include "csc/rng.hpp"

namespace csc {

// Ground truth for one generated image pair; the positive differs from the
// negative only inside the lesion disc.
struct SynthRecord {
    std::string neg_path;
    std::string pos_path;
    double fov_cx = 0, fov_cy = 0, fov_rx = 0, fov_ry = 0;
    double lesion_x = 0, lesion_y = 0, lesion_r = 0;
};

namespace detail {

// Soft-edged disc coverage in [0,1]; 1.5 px feather.
inline double disc_alpha(double dx, double dy, double r) {
    double d = std::sqrt(dx * dx + dy * dy);
    if (d <= r - 1.5) return 1.0;
    if (d >= r) return 0.0;
    return (r - d) / 1.5;
}

}  // namespace detail

struct SynthConfig {
    int n_per_class = 100;
    std::uint64_t seed = 0;
    int image_size = 256;
};

// Draws one negative/positive image pair. All geometry and noise come from
// streams keyed by (seed, index); the lesion has its own stream, so the pair
// differs only inside the lesion disc.
inline SynthRecord synth_pair(const SynthConfig& cfg, int index, FundusImage& neg,
                              FundusImage& pos) {
    const int S = cfg.image_size;
    CounterRng geo(cfg.seed, 2 * static_cast<std::uint64_t>(index) + 1);
    CounterRng les(cfg.seed, 2 * static_cast<std::uint64_t>(index) + 2);

    SynthRecord rec;
    rec.fov_cx = S / 2.0 + geo.uniform(-4.0, 4.0);
    rec.fov_cy = S / 2.0 + geo.uniform(-4.0, 4.0);
    rec.fov_rx = geo.uniform(0.45, 0.48) * S;
    rec.fov_ry = rec.fov_rx * geo.uniform(0.96, 1.0);

    // Warm retinal base color.
    double base_r = geo.uniform(150.0, 205.0);
    double base_g = base_r * geo.uniform(0.50, 0.65);
    double base_b = base_r * geo.uniform(0.15, 0.30);

    // Optic disc: brighter blob off-center.
    double od_ang = geo.uniform(0.0, 2.0 * std::numbers::pi);
    double od_dist = geo.uniform(0.45, 0.60) * rec.fov_rx;
    double od_x = rec.fov_cx + od_dist * std::cos(od_ang);
    double od_y = rec.fov_cy + od_dist * std::sin(od_ang);
    double od_r = geo.uniform(0.10, 0.14) * rec.fov_rx;
    double od_gain = geo.uniform(45.0, 65.0);

    // Vessel polylines radiating from the optic disc.
    int n_vessels = 3 + static_cast<int>(geo.next_below(4));
    struct Seg { double x0, y0, x1, y1, w; };
    std::vector<Seg> segs;
    for (int v = 0; v < n_vessels; ++v) {
        double ang = geo.uniform(0.0, 2.0 * std::numbers::pi);
        double x = od_x, y = od_y;
        double w = geo.uniform(1.0, 2.2);
        int steps = 8 + static_cast<int>(geo.next_below(5));
        double step_len = geo.uniform(0.06, 0.10) * rec.fov_rx;
        for (int st = 0; st < steps; ++st) {
            ang += geo.uniform(-0.5, 0.5);
            double nx = x + step_len * std::cos(ang);
            double ny = y + step_len * std::sin(ang);
            segs.push_back({x, y, nx, ny, w});
            x = nx;
            y = ny;
        }
    }

    // Lesion: low-contrast yellowish blob within the central third of the FOV.
    double le_ang = les.uniform(0.0, 2.0 * std::numbers::pi);
    double le_dist = les.uniform(0.0, rec.fov_rx / 3.0);
    rec.lesion_x = rec.fov_cx + le_dist * std::cos(le_ang);
    rec.lesion_y = rec.fov_cy + le_dist * std::sin(le_ang);
    rec.lesion_r = les.uniform(0.05, 0.10) * (2.0 * rec.fov_rx);
    double le_contrast = les.uniform(10.0, 25.0);

    auto seg_dist = [](const Seg& s, double px, double py) {
        double vx = s.x1 - s.x0, vy = s.y1 - s.y0;
        double len2 = vx * vx + vy * vy;
        double t = len2 > 0 ? ((px - s.x0) * vx + (py - s.y0) * vy) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        double dx = px - (s.x0 + t * vx), dy = py - (s.y0 + t * vy);
        return std::sqrt(dx * dx + dy * dy);
    };

    neg = FundusImage(S, S);
    pos = FundusImage(S, S);
    // Per-pixel noise drawn in a fixed raster order from the shared stream.
    for (int y = 0; y < S; ++y) {
        for (int x = 0; x < S; ++x) {
            double noise = geo.uniform(-5.0, 5.0);
            double nxl = (x - rec.fov_cx) / rec.fov_rx;
            double nyl = (y - rec.fov_cy) / rec.fov_ry;
            double rr = nxl * nxl + nyl * nyl;
            if (rr > 1.0) continue;  // black background

            // Mild vignette toward the rim. Kept gentle on purpose: a steep
            // one puts the whole central region in the top percentile of the
            // FOV histogram and equalization then clamps it (and any lesion)
            // against the 255 ceiling.
            double shade = 1.0 - 0.04 * rr;
            double r = base_r * shade, g = base_g * shade, b = base_b * shade;

            // pale, color-neutral disc (so its hue differs from lesions)
            double od_a = detail::disc_alpha(x - od_x, y - od_y, od_r);
            r += od_gain * od_a;
            g += od_gain * od_a;
            b += od_gain * od_a;

            double vd = 1e9;
            for (const auto& s : segs) vd = std::min(vd, seg_dist(s, x, y));
            // Darken along vessels; width from the nearest segment's draw is
            // approximated by a fixed 1.5 px falloff.
            double va = vd < 1.5 ? 1.0 - vd / 1.5 : 0.0;
            r -= 55.0 * va;
            g -= 45.0 * va;
            b -= 20.0 * va;

            r += noise;
            g += noise;
            b += noise;

            neg.at(x, y) = {clamp_u8(r), clamp_u8(g), clamp_u8(b)};

            // Yellowish weights normalized so the mean-channel (intensity)
            // lift equals the drawn contrast.
            double la = detail::disc_alpha(x - rec.lesion_x, y - rec.lesion_y, rec.lesion_r);
            r += 1.4 * le_contrast * la;
            g += 1.3 * le_contrast * la;
            b += 0.3 * le_contrast * la;
            pos.at(x, y) = {clamp_u8(r), clamp_u8(g), clamp_u8(b)};
        }
    }
    return rec;
}

// Writes 2 * n_per_class PNGs plus the manifest; returns the manifest path.
// Every image gets its own geometry: the negatives use pair indices
// 0..n-1 and the positives n..2n-1, so no negative shares a scene with a
// positive (a classifier could otherwise key on memorized scene geometry
// instead of the lesion). Paired twins are still available via synth_pair.
inline std::string generate_synthetic(const SynthConfig& cfg, const std::string& out_dir,
                                      std::vector<SynthRecord>* records = nullptr) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::vector<Sample> samples;
    for (int i = 0; i < cfg.n_per_class; ++i) {
        FundusImage neg, pos, unused;
        SynthRecord rec = synth_pair(cfg, i, neg, unused);
        SynthRecord pos_rec = synth_pair(cfg, cfg.n_per_class + i, unused, pos);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "neg_%04d.png", i);
        rec.neg_path = buf;
        std::snprintf(buf, sizeof(buf), "pos_%04d.png", i);
        pos_rec.pos_path = buf;
        rec.pos_path = pos_rec.pos_path;
        write_png(neg, (fs::path(out_dir) / rec.neg_path).string());
        write_png(pos, (fs::path(out_dir) / rec.pos_path).string());
        samples.push_back({rec.neg_path, 0, Split::Unassigned});
        samples.push_back({rec.pos_path, 1, Split::Unassigned});
        if (records) {
            records->push_back(rec);
            records->push_back(pos_rec);
        }
    }
    std::string manifest = (fs::path(out_dir) / "manifest.csv").string();
    save_manifest(samples, manifest);
    return manifest;
}

}  // namespace csc
