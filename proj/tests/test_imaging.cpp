#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "csc/imaging.hpp"
#include "csc/rng.hpp"

using namespace csc;

TEST_CASE("intensity_plane averages channels with round-half-away") {
    FundusImage img(3, 1);
    img.at(0, 0) = {0, 0, 0};
    img.at(1, 0) = {255, 255, 255};
    img.at(2, 0) = {10, 20, 30};
    GrayChannel ch = intensity_plane(img);
    CHECK(ch.at(0, 0) == 0);
    CHECK(ch.at(1, 0) == 255);
    CHECK(ch.at(2, 0) == 20);
}

TEST_CASE("equalize_gray hand cases") {
    GrayChannel a(2, 2);
    a.values = {0, 0, 255, 255};
    CHECK(equalize_gray(a).values == std::vector<std::uint8_t>{0, 0, 255, 255});

    GrayChannel b(2, 2);
    b.values = {10, 10, 10, 200};
    CHECK(equalize_gray(b).values == std::vector<std::uint8_t>{0, 0, 0, 255});

    GrayChannel c(2, 2);
    c.values = {7, 7, 7, 7};
    CHECK(equalize_gray(c).values == std::vector<std::uint8_t>{7, 7, 7, 7});
}

TEST_CASE("equalize_gray rejects empty input") {
    GrayChannel ch;
    CHECK_THROWS_WITH_AS(equalize_gray(ch), "empty input", ImageError);
}

TEST_CASE("equalize_gray monotone and full-range on random channels") {
    for (int trial = 0; trial < 1000; ++trial) {
        CounterRng rng(42, static_cast<std::uint64_t>(trial));
        int w = 2 + static_cast<int>(rng.next_below(10));
        int h = 2 + static_cast<int>(rng.next_below(10));
        GrayChannel ch(w, h);
        for (auto& v : ch.values) v = static_cast<std::uint8_t>(rng.next_below(256));
        GrayChannel out = equalize_gray(ch);

        // monotone mapping: v1 <= v2 implies out(v1) <= out(v2)
        std::array<int, 256> mapped;
        mapped.fill(-1);
        for (std::size_t i = 0; i < ch.values.size(); ++i) mapped[ch.values[i]] = out.values[i];
        int prev = -1;
        bool distinct = false;
        std::uint8_t max_in = 0;
        for (int v = 0; v < 256; ++v) {
            if (mapped[v] < 0) continue;
            CHECK(mapped[v] >= prev);
            prev = mapped[v];
            max_in = static_cast<std::uint8_t>(v);
        }
        for (auto v : ch.values)
            if (v != ch.values[0]) distinct = true;
        if (distinct) CHECK(mapped[max_in] == 255);
    }
}

TEST_CASE("hue-preserving color equalization branch arithmetic") {
    // downscale: I 100 -> 50, alpha 0.5
    CHECK(hue_preserving_map({100, 50, 150}, 100, 50) == Rgb{50, 25, 75});
    // zero intensity fixed point
    CHECK(hue_preserving_map({0, 0, 0}, 0, 128) == Rgb{0, 0, 0});
    // brighten: I 100 -> 177.5, shift toward white by (I'-I)/(255-I) = 0.5
    CHECK(hue_preserving_map({200, 100, 0}, 100, 177.5) == Rgb{228, 178, 128});
}

TEST_CASE("hue-preserving map keeps channel ordering and ratios") {
    CounterRng rng(7);
    for (int trial = 0; trial < 500; ++trial) {
        Rgb p = {static_cast<std::uint8_t>(rng.next_below(256)),
                 static_cast<std::uint8_t>(rng.next_below(256)),
                 static_cast<std::uint8_t>(rng.next_below(256))};
        std::sort(p.rbegin(), p.rend());  // r >= g >= b
        double intensity = std::round((p[0] + p[1] + p[2]) / 3.0);
        if (intensity <= 0) continue;
        double target = static_cast<double>(rng.next_below(256));
        Rgb out = hue_preserving_map(p, intensity, target);
        CHECK(out[0] >= out[1]);
        CHECK(out[1] >= out[2]);
        if (target <= intensity) {
            // ratio preservation up to rounding
            long lhs = std::labs(static_cast<long>(out[0]) * p[1] - static_cast<long>(out[1]) * p[0]);
            CHECK(lhs <= static_cast<long>(p[0]) + p[1]);
        }
    }
}

TEST_CASE("mask_outside_ellipse") {
    FundusImage img(4, 4, {255, 255, 255});
    Ellipse circle{1.5, 1.5, 1.0, 1.0, 0.0};
    FundusImage masked = mask_outside_ellipse(img, circle);
    // brute-force the interior inequality
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            bool inside = (x - 1.5) * (x - 1.5) + (y - 1.5) * (y - 1.5) <= 1.0;
            CHECK(masked.at(x, y) == (inside ? Rgb{255, 255, 255} : Rgb{0, 0, 0}));
        }
    }
    // idempotent
    CHECK(mask_outside_ellipse(masked, circle) == masked);
    // whole-frame ellipse leaves the image unchanged
    Ellipse big{1.5, 1.5, 100.0, 100.0, 0.0};
    CHECK(mask_outside_ellipse(img, big) == img);
    // degenerate ellipse rejected
    Ellipse flat{1.5, 1.5, 1.0, 0.0, 0.0};
    CHECK_THROWS_AS(mask_outside_ellipse(img, flat), ImageError);
}

TEST_CASE("crop_to_ellipse_bbox") {
    FundusImage img(100, 100);
    Ellipse e{50, 50, 20, 10, std::numbers::pi / 2};  // extents 10 horizontal, 20 vertical
    FundusImage crop = crop_to_ellipse_bbox(img, e);
    CHECK(crop.width == 21);
    CHECK(crop.height == 41);

    Ellipse huge{50, 50, 500, 500, 0};
    CHECK(crop_to_ellipse_bbox(img, huge) == img);

    Ellipse outside{500, 500, 5, 5, 0};
    CHECK_THROWS_AS(crop_to_ellipse_bbox(img, outside), ImageError);
}

namespace {
// Independent scalar oracle for the stated mapping: src = (i + 0.5) * scale - 0.5,
// clamped, linear interpolation between the two neighbors.
double bilinear_1d_oracle(const std::vector<double>& src, int out_n, int i) {
    double scale = static_cast<double>(src.size()) / out_n;
    double x = std::clamp((i + 0.5) * scale - 0.5, 0.0, static_cast<double>(src.size() - 1));
    int x0 = static_cast<int>(x);
    int x1 = std::min<int>(x0 + 1, static_cast<int>(src.size()) - 1);
    double w = x - x0;
    return (1.0 - w) * src[x0] + w * src[x1];
}
}  // namespace

TEST_CASE("resize_bilinear") {
    SUBCASE("constant image stays constant") {
        FundusImage img(5, 3, {40, 90, 200});
        FundusImage out = resize_bilinear(img, 11, 7);
        for (const auto& p : out.pixels) CHECK(p == Rgb{40, 90, 200});
    }
    SUBCASE("identity resize is bit-identical") {
        FundusImage img(4, 4);
        CounterRng rng(3);
        for (auto& p : img.pixels)
            p = {static_cast<std::uint8_t>(rng.next_below(256)),
                 static_cast<std::uint8_t>(rng.next_below(256)),
                 static_cast<std::uint8_t>(rng.next_below(256))};
        CHECK(resize_bilinear(img, 4, 4) == img);
    }
    SUBCASE("2x1 ramp to 4x1 matches the scalar oracle") {
        FundusImage img(2, 1);
        img.at(0, 0) = {0, 0, 0};
        img.at(1, 0) = {255, 255, 255};
        FundusImage out = resize_bilinear(img, 4, 1);
        std::vector<double> src = {0.0, 255.0};
        for (int i = 0; i < 4; ++i) {
            int expected = round_half_away(bilinear_1d_oracle(src, 4, i));
            CHECK(out.at(i, 0)[0] == expected);
        }
        // frozen oracle output for the stated pixel-center mapping
        CHECK(out.at(0, 0)[0] == 0);
        CHECK(out.at(1, 0)[0] == 64);
        CHECK(out.at(2, 0)[0] == 191);
        CHECK(out.at(3, 0)[0] == 255);
    }
    SUBCASE("no overshoot beyond input range") {
        CounterRng rng(11);
        for (int trial = 0; trial < 50; ++trial) {
            FundusImage img(3 + static_cast<int>(rng.next_below(6)),
                            3 + static_cast<int>(rng.next_below(6)));
            std::array<std::uint8_t, 3> lo = {255, 255, 255}, hi = {0, 0, 0};
            for (auto& p : img.pixels) {
                for (int c = 0; c < 3; ++c) {
                    p[c] = static_cast<std::uint8_t>(rng.next_below(256));
                    lo[c] = std::min(lo[c], p[c]);
                    hi[c] = std::max(hi[c], p[c]);
                }
            }
            FundusImage out = resize_bilinear(img, 7, 9);
            for (const auto& p : out.pixels)
                for (int c = 0; c < 3; ++c) {
                    CHECK(p[c] >= lo[c]);
                    CHECK(p[c] <= hi[c]);
                }
        }
    }
    SUBCASE("zero target dimension rejected") {
        FundusImage img(2, 2);
        CHECK_THROWS_AS(resize_bilinear(img, 0, 2), ImageError);
    }
}

TEST_CASE("full color equalization composes plane equalization with the hue map") {
    FundusImage img(2, 2);
    img.at(0, 0) = {0, 0, 0};
    img.at(1, 0) = {30, 30, 30};
    img.at(0, 1) = {30, 30, 30};
    img.at(1, 1) = {30, 30, 30};
    // plane [0,30,30,30]; cdf_min = 1, N = 4: 0 -> 0, 30 -> 255
    FundusImage out = equalize_color_hue_preserving(img);
    CHECK(out.at(0, 0) == Rgb{0, 0, 0});
    // brighten branch: beta = (255-30)/(255-30) = 1 -> saturate to white
    CHECK(out.at(1, 1) == Rgb{255, 255, 255});
}
